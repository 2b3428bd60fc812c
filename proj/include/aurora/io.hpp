#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "aurora/error.hpp"
#include "aurora/estimators.hpp"
#include "aurora/replicate.hpp"
#include "aurora/simlab.hpp"

namespace aurora {

// ---------------------------------------------------------------------------
// Number formatting

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw Error(ErrorCode::InvalidArgument, "cannot format number");
  return std::string(buf.data(), ptr);
}

inline bool parse_double(std::string_view text, double& out) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

// ---------------------------------------------------------------------------
// Replicate CSV

struct CsvOptions {
  bool has_header = false;
  bool id_column = false;  // first column holds unit identifiers
  bool allow_b2 = false;
};

struct LoadedReplicates {
  ReplicateMatrix data;
  std::vector<std::string> unit_ids;  // empty unless CsvOptions::id_column
};

namespace detail {

inline std::vector<std::string_view> split_cells(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

}  // namespace detail

inline LoadedReplicates read_replicates_csv(std::istream& in, const CsvOptions& options = {}) {
  std::vector<std::vector<double>> rows;
  std::vector<std::string> ids;
  std::string line;
  std::size_t line_no = 0, width = 0;
  bool header_pending = options.has_header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    auto cells = detail::split_cells(line);
    std::size_t first = 0;
    if (options.id_column) {
      ids.emplace_back(cells.front());
      first = 1;
    }
    const std::size_t count = cells.size() - first;
    if (rows.empty())
      width = count;
    else if (count != width)
      throw Error(ErrorCode::RaggedRows, "line " + std::to_string(line_no) + " has " + std::to_string(count) +
                                             " values, expected " + std::to_string(width));
    std::vector<double> row(count);
    for (std::size_t c = 0; c < count; ++c)
      if (!parse_double(cells[first + c], row[c]))
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ", column " +
                                               std::to_string(first + c + 1) + ": cannot parse '" +
                                               std::string(cells[first + c]) + "'");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorCode::Empty, "no data rows");
  return {validate_matrix(rows, {options.allow_b2}), std::move(ids)};
}

inline LoadedReplicates read_replicates_csv(const std::string& path, const CsvOptions& options = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open '" + path + "'");
  return read_replicates_csv(in, options);
}

/// One row per unit: id, then one column per method.
inline void write_estimates_csv(std::ostream& out, const std::vector<std::string>& unit_ids,
                                const std::vector<std::string>& methods,
                                const std::vector<EstimateVector>& columns) {
  if (methods.size() != columns.size()) throw Error(ErrorCode::LengthMismatch, "one column per method");
  const std::size_t n = columns.empty() ? unit_ids.size() : static_cast<std::size_t>(columns.front().size());
  out << "unit";
  for (const auto& m : methods) out << ',' << m;
  out << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    out << (unit_ids.empty() ? std::to_string(i + 1) : unit_ids[i]);
    for (const auto& col : columns) out << ',' << format_double(col[static_cast<Eigen::Index>(i)]);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Scenario config (JSON)

namespace detail {

using nlohmann::json;

[[noreturn]] inline void config_error(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::InvalidConfig, path + ": " + what);
}

inline void reject_unknown(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) config_error(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) config_error(path.empty() ? key : path + "." + key, "unknown key");
  }
}

inline double get_number(const json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) config_error(path + "." + key, "required");
  const auto& v = obj.at(key);
  if (!v.is_number()) config_error(path + "." + key, "expected a number");
  return v.get<double>();
}

inline std::size_t get_count(const json& obj, const std::string& path, const char* key) {
  const std::string p = path.empty() ? key : path + "." + key;
  if (!obj.contains(key)) config_error(p, "required");
  const auto& v = obj.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
    config_error(p, "expected a non-negative integer");
  return v.get<std::size_t>();
}

inline std::string get_string(const json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) config_error(path + "." + key, "required");
  const auto& v = obj.at(key);
  if (!v.is_string()) config_error(path + "." + key, "expected a string");
  return v.get<std::string>();
}

inline PriorSpec parse_prior(const json& j) {
  const std::string type = get_string(j, "prior", "type");
  if (type == "normal") {
    reject_unknown(j, "prior", {"type", "mean", "var"});
    return prior::Normal{get_number(j, "prior", "mean"), get_number(j, "prior", "var")};
  }
  if (type == "three_point") {
    reject_unknown(j, "prior", {"type", "var"});
    return prior::ThreePoint{get_number(j, "prior", "var")};
  }
  if (type == "uniform") {
    reject_unknown(j, "prior", {"type", "low", "high"});
    return prior::Uniform{get_number(j, "prior", "low"), get_number(j, "prior", "high")};
  }
  if (type == "point") {
    reject_unknown(j, "prior", {"type", "value"});
    return prior::Point{get_number(j, "prior", "value")};
  }
  config_error("prior.type", "unknown prior '" + type + "'");
}

inline LikelihoodSpec parse_likelihood(const json& j) {
  const std::string type = get_string(j, "likelihood", "type");
  if (type == "normal" || type == "laplace" || type == "rectangular") {
    reject_unknown(j, "likelihood", {"type", "var"});
    const double var = get_number(j, "likelihood", "var");
    if (type == "normal") return likelihood::Normal{var};
    if (type == "laplace") return likelihood::Laplace{var};
    return likelihood::Rectangular{var};
  }
  if (type == "pareto") {
    reject_unknown(j, "likelihood", {"type", "alpha"});
    return likelihood::Pareto{get_number(j, "likelihood", "alpha")};
  }
  if (type == "hetero") {
    reject_unknown(j, "likelihood", {"type", "base", "var_low", "var_high", "mean_link"});
    likelihood::Hetero h;
    const std::string base = get_string(j, "likelihood", "base");
    if (base == "normal")
      h.base = likelihood::Base::normal;
    else if (base == "rectangular")
      h.base = likelihood::Base::rectangular;
    else
      config_error("likelihood.base", "expected normal or rectangular");
    h.var_low = get_number(j, "likelihood", "var_low");
    h.var_high = get_number(j, "likelihood", "var_high");
    if (j.contains("mean_link")) {
      const std::string link = get_string(j, "likelihood", "mean_link");
      if (link == "independent")
        h.mean_link = likelihood::MeanLink::independent;
      else if (link == "equal_to_var")
        h.mean_link = likelihood::MeanLink::equal_to_var;
      else
        config_error("likelihood.mean_link", "expected independent or equal_to_var");
    }
    return h;
  }
  config_error("likelihood.type", "unknown likelihood '" + type + "'");
}

}  // namespace detail

/// Parses a scenario document. Unknown keys are errors; omitted options take
/// the MethodOptions defaults (k_max 1000, trim 0.1).
inline ScenarioConfig parse_config(const nlohmann::json& j) {
  using detail::config_error;
  detail::reject_unknown(j, "", {"n", "B", "reps", "seed", "prior", "likelihood", "methods", "options", "allow_b2"});
  ScenarioConfig c;
  c.n = detail::get_count(j, "", "n");
  c.B = detail::get_count(j, "", "B");
  c.reps = j.contains("reps") ? detail::get_count(j, "", "reps") : 1;
  c.seed = j.contains("seed") ? detail::get_count(j, "", "seed") : 0;
  c.allow_b2 = false;
  if (j.contains("allow_b2")) {
    if (!j.at("allow_b2").is_boolean()) config_error("allow_b2", "expected a boolean");
    c.allow_b2 = j.at("allow_b2").get<bool>();
  }
  if (!j.contains("likelihood")) config_error("likelihood", "required");
  c.likelihood = detail::parse_likelihood(j.at("likelihood"));
  const auto* het = std::get_if<likelihood::Hetero>(&c.likelihood);
  const bool prior_needed = !(het && het->mean_link == likelihood::MeanLink::equal_to_var);
  if (j.contains("prior"))
    c.prior = detail::parse_prior(j.at("prior"));
  else if (prior_needed)
    config_error("prior", "required");
  if (!j.contains("methods") || !j.at("methods").is_array() || j.at("methods").empty())
    config_error("methods", "expected a non-empty array of method names");
  for (std::size_t k = 0; k < j.at("methods").size(); ++k) {
    const auto& m = j.at("methods")[k];
    if (!m.is_string()) config_error("methods[" + std::to_string(k) + "]", "expected a string");
    c.methods.push_back(m.get<std::string>());
  }
  if (j.contains("options")) {
    const auto& o = j.at("options");
    detail::reject_unknown(o, "options", {"sigma2", "k_max", "trim", "js_center", "js_positive_part",
                                          "dim_threshold", "knn_jitter", "threads"});
    if (o.contains("sigma2") && !o["sigma2"].is_null()) c.options.sigma2 = detail::get_number(o, "options", "sigma2");
    if (o.contains("k_max")) c.options.k_max = detail::get_count(o, "options", "k_max");
    if (o.contains("trim")) c.options.trim = detail::get_number(o, "options", "trim");
    if (o.contains("dim_threshold")) c.options.dim_threshold = detail::get_count(o, "options", "dim_threshold");
    if (o.contains("knn_jitter")) c.options.knn_jitter = detail::get_number(o, "options", "knn_jitter");
    if (o.contains("threads")) c.options.threads = detail::get_count(o, "options", "threads");
    if (o.contains("js_center")) {
      const std::string center = detail::get_string(o, "options", "js_center");
      if (center == "zero")
        c.options.js_center = JsCenter::zero;
      else if (center == "grand_mean")
        c.options.js_center = JsCenter::grand_mean;
      else
        config_error("options.js_center", "expected zero or grand_mean");
    }
    if (o.contains("js_positive_part")) {
      if (!o.at("js_positive_part").is_boolean()) config_error("options.js_positive_part", "expected a boolean");
      c.options.js_positive_part = o.at("js_positive_part").get<bool>();
    }
  }
  if (c.options.k_max < 1) config_error("options.k_max", "must be at least 1");
  if (c.options.threads < 1) config_error("options.threads", "must be at least 1");
  validate_config(c);
  return c;
}

inline ScenarioConfig parse_config(std::istream& in) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("<document>: ") + e.what());
  }
  return parse_config(j);
}

/// The resolved config with every default spelled out.
inline nlohmann::json config_to_json(const ScenarioConfig& c) {
  nlohmann::json j;
  j["n"] = c.n;
  j["B"] = c.B;
  j["reps"] = c.reps;
  j["seed"] = c.seed;
  j["allow_b2"] = c.allow_b2;
  j["prior"] = std::visit(
      [](const auto& p) -> nlohmann::json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, prior::Normal>) return {{"type", "normal"}, {"mean", p.mean}, {"var", p.var}};
        else if constexpr (std::is_same_v<T, prior::ThreePoint>) return {{"type", "three_point"}, {"var", p.var}};
        else if constexpr (std::is_same_v<T, prior::Uniform>) return {{"type", "uniform"}, {"low", p.low}, {"high", p.high}};
        else return {{"type", "point"}, {"value", p.value}};
      },
      c.prior);
  j["likelihood"] = std::visit(
      [](const auto& l) -> nlohmann::json {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, likelihood::Normal>) return {{"type", "normal"}, {"var", l.var}};
        else if constexpr (std::is_same_v<T, likelihood::Laplace>) return {{"type", "laplace"}, {"var", l.var}};
        else if constexpr (std::is_same_v<T, likelihood::Rectangular>) return {{"type", "rectangular"}, {"var", l.var}};
        else if constexpr (std::is_same_v<T, likelihood::Pareto>) return {{"type", "pareto"}, {"alpha", l.alpha}};
        else
          return {{"type", "hetero"},
                  {"base", l.base == likelihood::Base::normal ? "normal" : "rectangular"},
                  {"var_low", l.var_low},
                  {"var_high", l.var_high},
                  {"mean_link", l.mean_link == likelihood::MeanLink::independent ? "independent" : "equal_to_var"}};
      },
      c.likelihood);
  j["methods"] = c.methods;
  nlohmann::json o;
  if (std::isnan(c.options.sigma2))
    o["sigma2"] = nullptr;
  else
    o["sigma2"] = c.options.sigma2;
  o["k_max"] = c.options.k_max;
  o["trim"] = c.options.trim;
  o["js_center"] = c.options.js_center == JsCenter::zero ? "zero" : "grand_mean";
  o["js_positive_part"] = c.options.js_positive_part;
  o["dim_threshold"] = c.options.dim_threshold;
  o["knn_jitter"] = c.options.knn_jitter;
  o["threads"] = c.options.threads;
  j["options"] = o;
  return j;
}

// ---------------------------------------------------------------------------
// Risk reports

inline constexpr const char* kSingleRepFlag = "se_undefined_single_rep";

inline void write_report_csv(std::ostream& out, const RiskReport& report) {
  out << "method,mse,se,reps,flag\n";
  for (const auto& m : report.methods)
    out << m.method << ',' << format_double(m.mse) << ',' << format_double(m.se) << ',' << m.reps << ','
        << (m.reps == 1 ? kSingleRepFlag : "") << '\n';
}

inline nlohmann::json report_to_json(const RiskReport& report) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& m : report.methods) {
    nlohmann::json row{{"method", m.method}, {"mse", m.mse}, {"se", m.se}, {"reps", m.reps}};
    if (m.reps == 1) row["flag"] = kSingleRepFlag;
    arr.push_back(row);
  }
  return {{"methods", arr}};
}

}  // namespace aurora
