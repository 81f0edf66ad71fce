#pragma once

// Deterministic JSON text for reports: keys sorted, CER-family values with 4
// fixed decimals, AP-family values with 3, every other float in nlohmann's
// shortest round-trip form.

#include <cstdio>
#include <string>
#include <string_view>

#include <json.hpp>

#include "medrx/errors.hpp"
#include "medrx/metrics.hpp"

namespace medrx {

using Json = nlohmann::json;

/// Fixed decimal count for a float stored under `key`, or -1 for shortest form.
inline int decimals_for_key(std::string_view key) {
  if (key == "cer_before" || key == "cer_after" || key == "improvement" || key == "cer")
    return 4;
  if (key == "ap" || key == "ap50" || key == "ap75" || key == "ap_m" || key == "ap_l") return 3;
  return -1;
}

namespace detail {

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  // Zero prints unsigned, never "-0.0000".
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
  return s;
}

inline void dump_value(const Json& j, std::string_view key, int indent, int depth,
                       std::string& out) {
  const auto newline = [&](int d) {
    out.push_back('\n');
    out.append(static_cast<std::size_t>(indent * d), ' ');
  };
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out.push_back('{');
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {  // std::map order: sorted
        if (!first) out.push_back(',');
        first = false;
        newline(depth + 1);
        out += Json(it.key()).dump();
        out += ": ";
        dump_value(it.value(), it.key(), indent, depth + 1, out);
      }
      newline(depth);
      out.push_back('}');
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out.push_back('[');
      bool first = true;
      for (const auto& v : j) {
        if (!first) out.push_back(',');
        first = false;
        newline(depth + 1);
        dump_value(v, key, indent, depth + 1, out);
      }
      newline(depth);
      out.push_back(']');
      return;
    }
    case Json::value_t::number_float: {
      const int dec = decimals_for_key(key);
      out += dec >= 0 ? fixed(j.get<double>(), dec) : j.dump();
      return;
    }
    default:
      out += j.dump();
  }
}

}  // namespace detail

inline std::string dump_report(const Json& j, int indent = 2) {
  std::string out;
  detail::dump_value(j, "", indent, 0, out);
  out.push_back('\n');
  return out;
}

// ---------------------------------------------------------------------------
// Report serializers

inline Json to_json(const CerReport& r) {
  return Json{{"category", r.category},
              {"cer_before", r.cer_before},
              {"cer_after", r.cer_after},
              {"improvement", r.improvement()},
              {"pairs", r.pairs},
              {"reference_chars", r.reference_chars},
              {"edits_before", r.edits_before},
              {"edits_after", r.edits_after}};
}

inline Json to_json(const ApReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  return Json{{"task", task_name(r.task)}, {"ap", r.ap},       {"ap50", r.ap50},
              {"ap75", r.ap75},            {"ap_m", opt(r.ap_m)}, {"ap_l", opt(r.ap_l)}};
}

inline ApReport ap_report_from_json(const Json& j) {
  try {
    ApReport r;
    const std::string task = j.at("task").get<std::string>();
    if (task == "bbox") {
      r.task = ApTask::bbox;
    } else if (task == "segm") {
      r.task = ApTask::segm;
    } else {
      throw FormatError("ap report: unknown task '" + task + "'");
    }
    r.ap = j.at("ap").get<double>();
    r.ap50 = j.at("ap50").get<double>();
    r.ap75 = j.at("ap75").get<double>();
    if (!j.at("ap_m").is_null()) r.ap_m = j.at("ap_m").get<double>();
    if (!j.at("ap_l").is_null()) r.ap_l = j.at("ap_l").get<double>();
    return r;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("ap report: ") + e.what());
  }
}

/// Reads back a CER row. `improvement` in the text is ignored and recomputed.
inline CerReport cer_report_from_json(const Json& j) {
  try {
    CerReport r;
    r.category = j.at("category").get<std::string>();
    r.cer_before = j.at("cer_before").get<double>();
    r.cer_after = j.at("cer_after").get<double>();
    r.pairs = j.value("pairs", std::size_t{0});
    r.reference_chars = j.value("reference_chars", std::size_t{0});
    r.edits_before = j.value("edits_before", std::size_t{0});
    r.edits_after = j.value("edits_after", std::size_t{0});
    return r;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("cer report: ") + e.what());
  }
}

/// For a CER row that states its own "improvement", returns the stated value
/// when it disagrees with before - after at 4-decimal precision.
inline std::optional<double> improvement_mismatch(const Json& row) {
  if (!row.contains("improvement") || !row.at("improvement").is_number()) return std::nullopt;
  const double stated = row.at("improvement").get<double>();
  const CerReport r = cer_report_from_json(row);
  if (detail::fixed(stated, 4) == detail::fixed(r.improvement(), 4)) return std::nullopt;
  return stated;
}

}  // namespace medrx
