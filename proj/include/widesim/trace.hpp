#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "widesim/des.hpp"

namespace widesim {

// One trace line: `time,entity,event_kind,subject_id,detail`.
// `detail` is a ';'-separated list of key=value pairs.
struct TraceRecord {
  SimTime time = 0.0;
  std::string entity;
  std::string kind;
  std::string subject;
  std::string detail;
  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

inline std::string format_time(SimTime t) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9f", t);
  return buf;
}

// Shortest representation that parses back to the same double.
inline std::string format_number(double v) {
  char buf[64];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

namespace detail {

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace detail

// Builds a detail string from key/value pairs.
class Detail {
 public:
  Detail& add(std::string_view key, std::string_view value) {
    if (!text_.empty()) text_ += ';';
    text_.append(key).append("=").append(value);
    return *this;
  }
  Detail& add(std::string_view key, double value) { return add(key, std::string_view(format_number(value))); }
  Detail& add(std::string_view key, long long value) { return add(key, std::string_view(std::to_string(value))); }
  Detail& add(std::string_view key, int value) { return add(key, static_cast<long long>(value)); }
  Detail& add(std::string_view key, std::uint64_t value) {
    return add(key, std::string_view(std::to_string(value)));
  }
  std::string str() const { return text_; }

 private:
  std::string text_;
};

inline std::optional<std::string> detail_get(std::string_view detail, std::string_view key) {
  std::size_t pos = 0;
  while (pos <= detail.size()) {
    std::size_t end = detail.find(';', pos);
    if (end == std::string_view::npos) end = detail.size();
    std::string_view item = detail.substr(pos, end - pos);
    if (auto eq = item.find('='); eq != std::string_view::npos && item.substr(0, eq) == key) {
      return std::string(item.substr(eq + 1));
    }
    pos = end + 1;
  }
  return std::nullopt;
}

class TraceSink {
 public:
  void emit(SimTime time, std::string entity, std::string kind, std::string subject, std::string detail = {}) {
    records_.push_back({time, std::move(entity), std::move(kind), std::move(subject), std::move(detail)});
  }

  const std::vector<TraceRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }

  static std::string format_line(const TraceRecord& r) {
    std::string line = format_time(r.time);
    line += ',';
    line += detail::csv_field(r.entity);
    line += ',';
    line += detail::csv_field(r.kind);
    line += ',';
    line += detail::csv_field(r.subject);
    line += ',';
    line += detail::csv_field(r.detail);
    return line;
  }

  void write(std::ostream& out) const {
    for (const auto& r : records_) out << format_line(r) << '\n';
  }

  std::string text() const {
    std::ostringstream out;
    write(out);
    return out.str();
  }

 private:
  std::vector<TraceRecord> records_;
};

}  // namespace widesim
