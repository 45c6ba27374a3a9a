#pragma once

// Umbrella header: weak-supervision guide labelling, dense CRF refinement and
// the evaluation stack.

#include "guideseg/common.hpp"
#include "guideseg/densecrf.hpp"
#include "guideseg/fixtures.hpp"
#include "guideseg/guides.hpp"
#include "guideseg/io.hpp"
#include "guideseg/metrics.hpp"
#include "guideseg/pipeline.hpp"
#include "guideseg/raster.hpp"
#include "guideseg/regions.hpp"
#include "guideseg/registry.hpp"
#include "guideseg/scores_file.hpp"
#include "guideseg/seeder.hpp"
