#pragma once

#include <fstream>
#include <map>
#include <string>

#include "json.hpp"

#include "guideseg/common.hpp"
#include "guideseg/guides.hpp"

namespace guideseg {

// G1 classifier scores on disk:
// {"<image_id>": {"<component_index>": {"<class_id>": {"full": f, "masked": f}}}}
// Component indices are the deterministic ids written by export-components.

inline std::map<std::string, G1Scores> load_g1_scores(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("'" + path + "': invalid JSON: " + e.what());
    }
    if (!doc.is_object()) throw FormatError("'" + path + "': top level must be an object");

    std::map<std::string, G1Scores> out;
    for (const auto& [image_id, comps] : doc.items()) {
        if (!comps.is_object())
            throw FormatError("'" + path + "': entry '" + image_id + "' must be an object");
        G1Scores scores;
        for (const auto& [comp_key, classes] : comps.items()) {
            std::uint32_t comp_id = 0;
            try {
                comp_id = static_cast<std::uint32_t>(std::stoul(comp_key));
            } catch (...) {
                throw FormatError("'" + path + "': bad component index '" + comp_key + "'");
            }
            for (const auto& [cls_key, entry] : classes.items()) {
                int cls = 0;
                try {
                    cls = std::stoi(cls_key);
                } catch (...) {
                    throw FormatError("'" + path + "': bad class id '" + cls_key + "'");
                }
                if (cls < 1 || cls > 254)
                    throw FormatError("'" + path + "': class id " + cls_key + " out of range");
                if (!entry.contains("full") || !entry.contains("masked"))
                    throw FormatError("'" + path + "': component " + comp_key + " class " +
                                      cls_key + " needs both \"full\" and \"masked\"");
                G1Scores::Entry e;
                e.full = entry["full"].get<double>();
                e.masked = entry["masked"].get<double>();
                scores.by_component[comp_id][static_cast<std::uint8_t>(cls)] = e;
            }
        }
        out.emplace(image_id, std::move(scores));
    }
    return out;
}

inline void write_g1_scores(const std::map<std::string, G1Scores>& all,
                            const std::string& path) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::object();
    for (const auto& [image_id, scores] : all) {
        nlohmann::ordered_json comps = nlohmann::ordered_json::object();
        for (const auto& [comp_id, classes] : scores.by_component) {
            nlohmann::ordered_json cls_obj = nlohmann::ordered_json::object();
            for (const auto& [cls, entry] : classes)
                cls_obj[std::to_string(cls)] = {{"full", entry.full}, {"masked", entry.masked}};
            comps[std::to_string(comp_id)] = std::move(cls_obj);
        }
        doc[image_id] = std::move(comps);
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << doc.dump(2) << "\n";
}

} // namespace guideseg
