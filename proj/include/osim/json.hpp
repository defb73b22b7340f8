#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include <json.hpp>

#include "osim/image.hpp"
#include "osim/inference.hpp"

namespace osim {

using json = nlohmann::json;

inline void to_json(json& j, const PixelBox& b) { j = json::array({b.x1, b.y1, b.x2, b.y2}); }

inline void from_json(const json& j, PixelBox& b) {
  if (!j.is_array() || j.size() != 4) throw json::other_error::create(501, "bbox must be [x1,y1,x2,y2]", &j);
  b = {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

inline void to_json(json& j, const Detection& d) {
  j = json{{"class_id", d.class_id}, {"confidence", d.confidence}, {"bbox", d.bbox}};
}

inline void from_json(const json& j, Detection& d) {
  d.class_id = j.at("class_id").get<int>();
  d.confidence = j.at("confidence").get<double>();
  d.bbox = j.at("bbox").get<PixelBox>();
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace osim
