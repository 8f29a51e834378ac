#pragma once

// Claim feature vectors and replication labels: CSV / JSON-lines ingestion,
// min-max normalization fit on the training set, and domain filtering.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "replimarket/core.hpp"
#include "json.hpp"

namespace replimarket {

using FeatureVector = std::array<double, kFeatureCount>;

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct ClaimRecord {
  std::string claim_id;
  Domain domain = Domain::psychology;
  FeatureVector features{};  // NaN marks a missing value before imputation
  std::optional<Outcome> outcome;
  std::string title;

  friend bool operator==(const ClaimRecord& a, const ClaimRecord& b) {
    if (a.claim_id != b.claim_id || a.domain != b.domain ||
        a.outcome != b.outcome || a.title != b.title)
      return false;
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      const double x = a.features[i], y = b.features[i];
      if (!(x == y || (std::isnan(x) && std::isnan(y)))) return false;
    }
    return true;
  }
};

/// Per-feature transform parameters. Fit once on the training set and
/// reused verbatim for every other set.
struct Scaler {
  FeatureVector min{};
  FeatureVector max{};
  FeatureVector median{};

  double transform(std::size_t i, double v) const {
    if (std::isnan(v)) v = median[i];
    const double range = max[i] - min[i];
    if (!(range > 0.0)) return 0.5;
    return std::clamp((v - min[i]) / range, 0.0, 1.0);
  }

  friend bool operator==(const Scaler&, const Scaler&) = default;
};

enum class SetRole : std::uint8_t { train, test };

struct ClaimSet {
  std::vector<ClaimRecord> records;
  std::optional<Scaler> scaler;  // set once the records are normalized
  SetRole role = SetRole::train;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }

  const ClaimRecord* find(std::string_view id) const noexcept {
    for (const auto& r : records)
      if (r.claim_id == id) return &r;
    return nullptr;
  }

  friend bool operator==(const ClaimSet&, const ClaimSet&) = default;
};

enum class ClaimFormat : std::uint8_t { csv, jsonl };

inline std::string feature_column(std::size_t i) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "f%02zu", i + 1);
  return buf;
}

namespace detail {

// RFC-4180-ish field splitter: commas, double-quoted fields, "" escapes.
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

inline bool is_missing_token(std::string_view s) {
  return s.empty() || s == "NA" || s == "na" || s == "nan" || s == "NaN" ||
         s == "null";
}

inline std::string row_error(std::size_t row, std::string_view column,
                             std::string_view what) {
  std::ostringstream os;
  os << "row " << row << ", column '" << column << "': " << what;
  return os.str();
}

inline double parse_feature(const std::string& tok, std::size_t row,
                            std::string_view column) {
  if (is_missing_token(tok)) return kMissing;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    throw DataError(row_error(row, column, "not a number: '" + tok + "'"));
  }
  if (used != tok.size() || !std::isfinite(v))
    throw DataError(row_error(row, column, "not a finite number: '" + tok + "'"));
  return v;
}

inline std::string print_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline ClaimSet parse_claims_csv(std::istream& in, SetRole role = SetRole::train) {
  ClaimSet set;
  set.role = role;
  std::string line;
  if (!std::getline(in, line)) throw DataError("schema: missing header row");
  const auto header = detail::split_csv_line(line);

  std::optional<std::size_t> id_col, domain_col, outcome_col, title_col;
  std::array<std::optional<std::size_t>, kFeatureCount> feat_col{};
  std::size_t feature_columns = 0;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (h == "claim_id") id_col = c;
    else if (h == "domain") domain_col = c;
    else if (h == "outcome") outcome_col = c;
    else if (h == "title") title_col = c;
    else if (h.size() >= 2 && h[0] == 'f' &&
             std::all_of(h.begin() + 1, h.end(), ::isdigit)) {
      ++feature_columns;
      const int idx = std::stoi(h.substr(1));
      if (idx < 1 || idx > static_cast<int>(kFeatureCount) || feat_col[idx - 1])
        throw DataError("schema: unexpected feature column '" + h + "'");
      feat_col[idx - 1] = c;
    }
  }
  if (!id_col || !domain_col) throw DataError("schema: header needs claim_id and domain");
  if (feature_columns != kFeatureCount)
    throw DataError("schema: expected 41 feature columns f01..f41, found " +
                    std::to_string(feature_columns));

  std::unordered_set<std::string> seen;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      throw DataError(detail::row_error(
          row, "*", "expected " + std::to_string(header.size()) + " fields, got " +
                        std::to_string(fields.size())));
    ClaimRecord rec;
    rec.claim_id = fields[*id_col];
    if (rec.claim_id.empty()) throw DataError(detail::row_error(row, "claim_id", "empty"));
    if (!seen.insert(rec.claim_id).second)
      throw DataError(detail::row_error(row, "claim_id", "duplicate '" + rec.claim_id + "'"));
    const auto dom = parse_domain(fields[*domain_col]);
    if (!dom)
      throw DataError(detail::row_error(row, "domain", "unknown discipline '" +
                                                           fields[*domain_col] + "'"));
    rec.domain = *dom;
    if (outcome_col && !fields[*outcome_col].empty()) {
      rec.outcome = parse_outcome(fields[*outcome_col]);
      if (!rec.outcome)
        throw DataError(detail::row_error(row, "outcome", "expected R, NR or empty"));
    }
    if (title_col) rec.title = fields[*title_col];
    for (std::size_t i = 0; i < kFeatureCount; ++i)
      rec.features[i] = detail::parse_feature(fields[*feat_col[i]], row, feature_column(i));
    set.records.push_back(std::move(rec));
  }
  return set;
}

inline ClaimSet parse_claims_jsonl(std::istream& in, SetRole role = SetRole::train) {
  using nlohmann::json;
  ClaimSet set;
  set.role = role;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(detail::row_error(row, "*", std::string("invalid JSON: ") + e.what()));
    }
    if (!j.is_object()) throw DataError(detail::row_error(row, "*", "expected an object"));
    ClaimRecord rec;
    if (!j.contains("claim_id") || !j["claim_id"].is_string())
      throw DataError(detail::row_error(row, "claim_id", "missing or not a string"));
    rec.claim_id = j["claim_id"].get<std::string>();
    if (!seen.insert(rec.claim_id).second)
      throw DataError(detail::row_error(row, "claim_id", "duplicate '" + rec.claim_id + "'"));
    if (!j.contains("domain") || !j["domain"].is_string())
      throw DataError(detail::row_error(row, "domain", "missing or not a string"));
    const auto dom = parse_domain(j["domain"].get<std::string>());
    if (!dom) throw DataError(detail::row_error(row, "domain", "unknown discipline"));
    rec.domain = *dom;
    if (j.contains("outcome") && !j["outcome"].is_null()) {
      const auto& o = j["outcome"];
      if (!o.is_string())
        throw DataError(detail::row_error(row, "outcome", "expected \"R\", \"NR\" or null"));
      if (const auto text = o.get<std::string>(); !text.empty()) {
        rec.outcome = parse_outcome(text);
        if (!rec.outcome)
          throw DataError(detail::row_error(row, "outcome", "expected \"R\", \"NR\" or null"));
      }
    }
    if (j.contains("title") && j["title"].is_string()) rec.title = j["title"].get<std::string>();

    auto read_value = [&](const json& v, const std::string& col) {
      if (v.is_null()) return kMissing;
      if (!v.is_number()) throw DataError(detail::row_error(row, col, "not a number"));
      return v.get<double>();
    };
    if (j.contains("features")) {
      const auto& f = j["features"];
      if (!f.is_array() || f.size() != kFeatureCount)
        throw DataError("schema: row " + std::to_string(row) +
                        " 'features' must hold 41 values");
      for (std::size_t i = 0; i < kFeatureCount; ++i)
        rec.features[i] = read_value(f[i], feature_column(i));
    } else {
      std::size_t present = 0;
      for (auto it = j.begin(); it != j.end(); ++it) {
        const auto& k = it.key();
        if (k.size() >= 2 && k[0] == 'f' && std::all_of(k.begin() + 1, k.end(), ::isdigit))
          ++present;
      }
      if (present != kFeatureCount)
        throw DataError("schema: row " + std::to_string(row) + " expected 41 feature keys, found " +
                        std::to_string(present));
      for (std::size_t i = 0; i < kFeatureCount; ++i) {
        const auto col = feature_column(i);
        if (!j.contains(col)) throw DataError(detail::row_error(row, col, "missing"));
        rec.features[i] = read_value(j[col], col);
      }
    }
    set.records.push_back(std::move(rec));
  }
  return set;
}

inline ClaimFormat format_from_path(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".jsonl" || ext == ".ndjson" || ext == ".json") return ClaimFormat::jsonl;
  return ClaimFormat::csv;
}

inline ClaimSet ingest(const std::filesystem::path& path,
                       std::optional<ClaimFormat> format = std::nullopt,
                       SetRole role = SetRole::train) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open claim file: " + path.string());
  const ClaimFormat fmt = format.value_or(format_from_path(path));
  return fmt == ClaimFormat::csv ? parse_claims_csv(in, role) : parse_claims_jsonl(in, role);
}

inline void write_claims_csv(std::ostream& out, const ClaimSet& set) {
  out << "claim_id,domain,outcome";
  for (std::size_t i = 0; i < kFeatureCount; ++i) out << ',' << feature_column(i);
  out << ",title\n";
  for (const auto& r : set.records) {
    out << detail::csv_escape(r.claim_id) << ',' << to_string(r.domain) << ','
        << (r.outcome ? to_string(*r.outcome) : "");
    for (double v : r.features) {
      out << ',';
      if (!std::isnan(v)) out << detail::print_double(v);
    }
    out << ',' << detail::csv_escape(r.title) << '\n';
  }
}

inline void write_claims_jsonl(std::ostream& out, const ClaimSet& set) {
  using nlohmann::json;
  for (const auto& r : set.records) {
    json j = json::object();
    j["claim_id"] = r.claim_id;
    j["domain"] = std::string(to_string(r.domain));
    j["outcome"] = r.outcome ? json(std::string(to_string(*r.outcome))) : json(nullptr);
    for (std::size_t i = 0; i < kFeatureCount; ++i)
      j[feature_column(i)] = std::isnan(r.features[i]) ? json(nullptr) : json(r.features[i]);
    j["title"] = r.title;
    out << j.dump() << '\n';
  }
}

inline void save_claims(const std::filesystem::path& path, const ClaimSet& set) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write claim file: " + path.string());
  if (format_from_path(path) == ClaimFormat::csv) write_claims_csv(out, set);
  else write_claims_jsonl(out, set);
}

// Column median of the non-missing values; NaN when the column has none.
inline double column_median(const ClaimSet& set, std::size_t col) {
  std::vector<double> vals;
  vals.reserve(set.size());
  for (const auto& r : set.records)
    if (!std::isnan(r.features[col])) vals.push_back(r.features[col]);
  if (vals.empty()) return kMissing;
  std::sort(vals.begin(), vals.end());
  const std::size_t n = vals.size();
  return n % 2 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
}

inline Scaler fit_scaler(const ClaimSet& set) {
  if (set.empty()) throw DataError("cannot fit a scaler on an empty claim set");
  if (set.role != SetRole::train) throw DataError("scaler must be fit on the training set");
  Scaler s;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const double med = column_median(set, i);
    if (!std::isfinite(med))
      throw DataError("feature " + feature_column(i) + " has no finite values to impute from");
    s.median[i] = med;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& r : set.records) {
      const double v = std::isnan(r.features[i]) ? med : r.features[i];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    s.min[i] = lo;
    s.max[i] = hi;
  }
  return s;
}

/// Applies a fitted scaler. A set already normalized with the same scaler
/// is returned unchanged; one normalized with a different scaler is refused.
inline ClaimSet apply_normalize(const ClaimSet& set, const Scaler& scaler) {
  if (set.scaler) {
    if (*set.scaler == scaler) return set;
    throw DataError("claim set is already normalized with a different scaler");
  }
  ClaimSet out = set;
  for (auto& r : out.records)
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      r.features[i] = scaler.transform(i, r.features[i]);
      if (!std::isfinite(r.features[i]))
        throw DataError("claim " + r.claim_id + ": non-finite value in " + feature_column(i));
    }
  out.scaler = scaler;
  return out;
}

inline ClaimSet fit_normalize(const ClaimSet& set) {
  return apply_normalize(set, fit_scaler(set));
}

inline ClaimSet split_by_domain(const ClaimSet& set, Domain domain) {
  ClaimSet out;
  out.scaler = set.scaler;
  out.role = set.role;
  for (const auto& r : set.records)
    if (r.domain == domain) out.records.push_back(r);
  return out;
}

inline nlohmann::json to_json(const Scaler& s) {
  using nlohmann::json;
  json j;
  j["features"] = kFeatureCount;
  j["min"] = json(std::vector<double>(s.min.begin(), s.min.end()));
  j["max"] = json(std::vector<double>(s.max.begin(), s.max.end()));
  j["median"] = json(std::vector<double>(s.median.begin(), s.median.end()));
  return j;
}

inline Scaler scaler_from_json(const nlohmann::json& j) {
  Scaler s;
  auto load = [&](const char* key, FeatureVector& dst) {
    if (!j.contains(key) || !j[key].is_array() || j[key].size() != kFeatureCount)
      throw DataError(std::string("scaler: '") + key + "' must hold 41 numbers");
    for (std::size_t i = 0; i < kFeatureCount; ++i) dst[i] = j[key][i].get<double>();
  };
  load("min", s.min);
  load("max", s.max);
  load("median", s.median);
  return s;
}

}  // namespace replimarket
