#pragma once

// JSON instance and scheme files, CSV output.
//
// Instance file:
//   {
//     "distribution": {"kind": "uniform", "support": [0, 1]},
//     "ctr_prior": [{"r": [1, 0.6], "prob": 0.5}, {"r": [0.6, 1], "prob": 0.5}],
//     "reserve": 0.0,      // optional
//     "n": 2,              // optional, checked against the CTR vectors
//     "min_ctr": 0.1       // optional lower end of admissible signals
//   }
// Distribution kinds: uniform {support}, exponential {rate},
// poly {coeffs (ascending powers), support}, table {points: [[v, f], ...]}.
//
// Scheme file: a list of {"r": [...], "s": [...], "mass": m} records, or an
// object whose "scheme" member is such a list (extra members such as a
// construction report are ignored on input).
//
// Every diagnostic names the file, line and column of the offending value.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "calibra/diagnostics.hpp"
#include "calibra/distributions.hpp"
#include "calibra/error.hpp"
#include "calibra/prior.hpp"
#include "calibra/scheme.hpp"

namespace calibra {

using Json = nlohmann::ordered_json;

/// Input error tied to a position in a text file.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& source, int line, int column, const std::string& what)
      : ValidationError(source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

/// Maps JSON pointers ("/ctr_prior/1/prob") to the line and column where
/// the value starts. Built from text that has already parsed successfully.
class JsonLocator {
 public:
  JsonLocator() = default;
  explicit JsonLocator(std::string_view text) : text_(text) {
    skip_ws();
    if (pos_ < text_.size()) value("");
  }

  std::pair<int, int> find(const std::string& pointer) const {
    // Fall back to the closest enclosing value that was recorded.
    std::string p = pointer;
    while (true) {
      const auto it = where_.find(p);
      if (it != where_.end()) return it->second;
      if (p.empty()) return {1, 1};
      p.erase(p.rfind('/'));
    }
  }

 private:
  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' ||
                                   text_[pos_] == '\r')) {
      advance();
    }
  }

  std::string string_token() {
    std::string out;
    advance();  // opening quote
    while (pos_ < text_.size() && text_[pos_] != '"') {
      if (text_[pos_] == '\\') {
        advance();
        if (pos_ < text_.size()) out.push_back(text_[pos_]);
      } else {
        out.push_back(text_[pos_]);
      }
      advance();
    }
    if (pos_ < text_.size()) advance();  // closing quote
    return out;
  }

  static std::string escape(const std::string& key) {
    std::string out;
    for (char c : key) {
      if (c == '~') {
        out += "~0";
      } else if (c == '/') {
        out += "~1";
      } else {
        out.push_back(c);
      }
    }
    return out;
  }

  void value(const std::string& ptr) {
    where_[ptr] = {line_, col_};
    const char c = text_[pos_];
    if (c == '{') {
      advance();
      skip_ws();
      while (pos_ < text_.size() && text_[pos_] != '}') {
        const std::string key = string_token();
        skip_ws();
        advance();  // ':'
        skip_ws();
        value(ptr + "/" + escape(key));
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == ',') {
          advance();
          skip_ws();
        }
      }
      if (pos_ < text_.size()) advance();
    } else if (c == '[') {
      advance();
      skip_ws();
      std::size_t idx = 0;
      while (pos_ < text_.size() && text_[pos_] != ']') {
        value(ptr + "/" + std::to_string(idx++));
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == ',') {
          advance();
          skip_ws();
        }
      }
      if (pos_ < text_.size()) advance();
    } else if (c == '"') {
      string_token();
    } else {
      while (pos_ < text_.size() && std::string_view(",]} \t\r\n").find(text_[pos_]) == std::string_view::npos) {
        advance();
      }
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  std::map<std::string, std::pair<int, int>> where_;
};

/// Parsed JSON document with position lookup for diagnostics.
class JsonDocument {
 public:
  JsonDocument(std::string text, std::string source) : text_(std::move(text)), source_(std::move(source)) {
    try {
      root_ = Json::parse(text_);
    } catch (const Json::parse_error& e) {
      const auto [line, col] = position_of(e.byte == 0 ? 0 : e.byte - 1);
      std::string msg = e.what();
      // Drop nlohmann's "[json.exception.parse_error.101] parse error at line x, column y: " prefix.
      if (const auto p = msg.find(": "); p != std::string::npos && msg.rfind("[json.exception", 0) == 0) {
        msg = "malformed JSON: " + msg.substr(p + 2);
      }
      throw ParseError(source_, line, col, msg);
    }
    locator_ = JsonLocator(text_);
  }

  const Json& root() const { return root_; }
  const std::string& source() const { return source_; }

  [[noreturn]] void fail(const std::string& pointer, const std::string& what) const {
    const auto [line, col] = locator_.find(pointer);
    throw ParseError(source_, line, col, what + (pointer.empty() ? "" : " (at " + pointer + ")"));
  }

 private:
  std::pair<int, int> position_of(std::size_t byte) const {
    int line = 1;
    int col = 1;
    for (std::size_t i = 0; i < byte && i < text_.size(); ++i) {
      if (text_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    return {line, col};
  }

  std::string text_;
  std::string source_;
  Json root_;
  JsonLocator locator_;
};

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace detail {

inline const Json& member(const JsonDocument& doc, const Json& obj, const std::string& ptr, const char* key) {
  if (!obj.is_object()) doc.fail(ptr, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) doc.fail(ptr, std::string("missing required field \"") + key + "\"");
  return *it;
}

inline double number(const JsonDocument& doc, const Json& v, const std::string& ptr) {
  if (!v.is_number()) doc.fail(ptr, "expected a number");
  return v.get<double>();
}

inline std::vector<double> number_list(const JsonDocument& doc, const Json& v, const std::string& ptr) {
  if (!v.is_array()) doc.fail(ptr, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(doc, v[i], ptr + "/" + std::to_string(i)));
  return out;
}

inline std::pair<double, double> support(const JsonDocument& doc, const Json& obj, const std::string& ptr) {
  const auto vals = number_list(doc, member(doc, obj, ptr, "support"), ptr + "/support");
  if (vals.size() != 2) doc.fail(ptr + "/support", "support must be [lo, hi]");
  return {vals[0], vals[1]};
}

}  // namespace detail

inline ValueDistribution parse_distribution(const JsonDocument& doc, const Json& obj, const std::string& ptr) {
  const auto& kind_v = detail::member(doc, obj, ptr, "kind");
  if (!kind_v.is_string()) doc.fail(ptr + "/kind", "distribution kind must be a string");
  const auto kind = kind_v.get<std::string>();
  try {
    if (kind == "uniform") {
      const auto [lo, hi] = detail::support(doc, obj, ptr);
      return ValueDistribution::uniform(lo, hi);
    }
    if (kind == "exponential") {
      return ValueDistribution::exponential(detail::number(doc, detail::member(doc, obj, ptr, "rate"), ptr + "/rate"));
    }
    if (kind == "poly" || kind == "polynomial") {
      auto coeffs = detail::number_list(doc, detail::member(doc, obj, ptr, "coeffs"), ptr + "/coeffs");
      const auto [lo, hi] = detail::support(doc, obj, ptr);
      return ValueDistribution::polynomial(std::move(coeffs), lo, hi);
    }
    if (kind == "table" || kind == "tabulated") {
      const auto& pts = detail::member(doc, obj, ptr, "points");
      if (!pts.is_array()) doc.fail(ptr + "/points", "points must be an array of [v, f] pairs");
      std::vector<std::pair<double, double>> points;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto p = detail::number_list(doc, pts[i], ptr + "/points/" + std::to_string(i));
        if (p.size() != 2) doc.fail(ptr + "/points/" + std::to_string(i), "each point must be [v, f]");
        points.emplace_back(p[0], p[1]);
      }
      return ValueDistribution::tabulated(std::move(points));
    }
  } catch (const ParseError&) {
    throw;
  } catch (const ValidationError& e) {
    doc.fail(ptr, e.what());
  }
  doc.fail(ptr + "/kind", "unknown distribution kind \"" + kind + "\" (expected uniform, exponential, poly or table)");
}

struct Instance {
  ValueDistribution distribution;
  CtrPrior prior;
  double reserve = 0.0;
  std::string source;
};

/// Parses an instance. Prior probabilities must sum to 1 within 1e-9; sums
/// off by more than 1e-12 are renormalised with a warning.
inline Instance parse_instance(std::string text, std::string source = "<instance>") {
  const JsonDocument doc(std::move(text), std::move(source));
  const Json& root = doc.root();
  if (!root.is_object()) doc.fail("", "instance must be a JSON object");
  auto dist = parse_distribution(doc, detail::member(doc, root, "", "distribution"), "/distribution");

  const auto& prior_v = detail::member(doc, root, "", "ctr_prior");
  if (!prior_v.is_array() || prior_v.empty()) doc.fail("/ctr_prior", "ctr_prior must be a non-empty array");
  std::vector<CtrState> states;
  double total = 0.0;
  for (std::size_t k = 0; k < prior_v.size(); ++k) {
    const std::string ptr = "/ctr_prior/" + std::to_string(k);
    CtrState st;
    st.r = detail::number_list(doc, detail::member(doc, prior_v[k], ptr, "r"), ptr + "/r");
    st.prob = detail::number(doc, detail::member(doc, prior_v[k], ptr, "prob"), ptr + "/prob");
    if (!(st.prob > 0.0)) doc.fail(ptr + "/prob", "probability must be positive");
    if (!states.empty() && st.r.size() != states.front().r.size()) {
      doc.fail(ptr + "/r", "CTR vector length differs from the first state");
    }
    if (st.r.empty()) doc.fail(ptr + "/r", "CTR vector must be non-empty");
    for (std::size_t i = 0; i < st.r.size(); ++i) {
      if (!(st.r[i] > 0.0 && st.r[i] <= 1.0)) doc.fail(ptr + "/r/" + std::to_string(i), "CTR values must lie in (0, 1]");
    }
    total += st.prob;
    states.push_back(std::move(st));
  }
  if (const auto it = root.find("n"); it != root.end()) {
    if (!it->is_number_integer() || it->get<long long>() != static_cast<long long>(states.front().r.size())) {
      doc.fail("/n", "n must equal the length of the CTR vectors");
    }
  }
  if (std::abs(total - 1.0) > 1e-9) {
    doc.fail("/ctr_prior", "prior probabilities sum to " + std::to_string(total) + ", not 1");
  }
  if (std::abs(total - 1.0) > 1e-12) {
    warn(doc.source() + ": prior probabilities sum to " + std::to_string(total) + "; renormalised");
  }
  std::optional<double> min_ctr;
  if (const auto it = root.find("min_ctr"); it != root.end()) min_ctr = detail::number(doc, *it, "/min_ctr");
  double reserve = 0.0;
  if (const auto it = root.find("reserve"); it != root.end()) {
    reserve = detail::number(doc, *it, "/reserve");
    if (!(reserve >= 0.0)) doc.fail("/reserve", "reserve price must be >= 0");
  }
  try {
    auto prior = CtrPrior::normalized(std::move(states), min_ctr);
    return Instance{std::move(dist), std::move(prior), reserve, doc.source()};
  } catch (const ParseError&) {
    throw;
  } catch (const ValidationError& e) {
    doc.fail("/ctr_prior", e.what());
  }
}

inline Instance load_instance(const std::string& path) { return parse_instance(read_text_file(path), path); }

inline Json distribution_to_json(const ValueDistribution& d) {
  return std::visit(
      detail::Overload{
          [](const UniformLaw& u) { return Json{{"kind", "uniform"}, {"support", {u.lo, u.hi}}}; },
          [](const ExponentialLaw& e) { return Json{{"kind", "exponential"}, {"rate", e.rate}}; },
          [](const PolynomialLaw& p) { return Json{{"kind", "poly"}, {"coeffs", p.coeffs}, {"support", {p.lo, p.hi}}}; },
          [](const TabulatedLaw& t) {
            Json pts = Json::array();
            for (std::size_t i = 0; i < t.v.size(); ++i) pts.push_back({t.v[i], t.f[i]});
            return Json{{"kind", "table"}, {"points", pts}};
          }},
      d.law());
}

inline Json instance_to_json(const ValueDistribution& d, const CtrPrior& prior, double reserve = 0.0) {
  Json states = Json::array();
  for (const auto& st : prior.states()) states.push_back({{"r", st.r}, {"prob", st.prob}});
  Json out{{"distribution", distribution_to_json(d)}, {"ctr_prior", states}};
  if (reserve > 0.0) out["reserve"] = reserve;
  return out;
}

inline Json scheme_to_json(const SignalingScheme& sch) {
  Json out = Json::array();
  for (const auto& e : sch) out.push_back({{"r", e.r}, {"s", e.s}, {"mass", e.mass}});
  return out;
}

inline SignalingScheme parse_scheme(std::string text, std::string source = "<scheme>") {
  const JsonDocument doc(std::move(text), std::move(source));
  const Json* list = &doc.root();
  std::string base;
  if (list->is_object()) {
    list = &detail::member(doc, *list, "", "scheme");
    base = "/scheme";
  }
  if (!list->is_array() || list->empty()) doc.fail(base, "scheme must be a non-empty array of {r, s, mass} records");
  SignalingScheme sch;
  for (std::size_t k = 0; k < list->size(); ++k) {
    const std::string ptr = base + "/" + std::to_string(k);
    const auto& rec = (*list)[k];
    auto r = detail::number_list(doc, detail::member(doc, rec, ptr, "r"), ptr + "/r");
    auto s = detail::number_list(doc, detail::member(doc, rec, ptr, "s"), ptr + "/s");
    const double mass = detail::number(doc, detail::member(doc, rec, ptr, "mass"), ptr + "/mass");
    if (!(mass >= 0.0)) doc.fail(ptr + "/mass", "mass must be >= 0");
    if (r.size() != s.size()) doc.fail(ptr, "r and s must have the same length");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!(s[i] > 0.0)) doc.fail(ptr + "/s/" + std::to_string(i), "signals must be positive");
    }
    try {
      sch.add(std::move(r), std::move(s), mass);
    } catch (const ValidationError& e) {
      doc.fail(ptr, e.what());
    }
  }
  return sch;
}

inline SignalingScheme load_scheme(const std::string& path) { return parse_scheme(read_text_file(path), path); }

inline Json report_to_json(const ConstructionReport& r) {
  return Json{{"l", r.l},
              {"x", r.x},
              {"K", r.k},
              {"sigma", r.sigma},
              {"p", r.p},
              {"z", r.z},
              {"S", r.s},
              {"pair_mass", r.pair_mass},
              {"suboptimal_share", r.suboptimal_share},
              {"revenue", r.revenue},
              {"upper_bound", r.upper_bound}};
}

/// 17 significant digits: parses back to the identical double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Minimal CSV writer: a fixed header, then rows of already formatted
/// fields. Fields containing separators or quotes are quoted.
class CsvWriter {
 public:
  CsvWriter(std::ostream& out, std::vector<std::string> header) : out_(out), columns_(header.size()) {
    row_strings(header);
  }

  template <class... Ts>
  void row(const Ts&... fields) {
    std::vector<std::string> v{field(fields)...};
    if (v.size() != columns_) throw Error("CSV row has " + std::to_string(v.size()) + " fields, header has " +
                                          std::to_string(columns_));
    row_strings(v);
  }

  void row_strings(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << quote(fields[i]);
    }
    out_ << '\n';
  }

 private:
  static std::string field(double v) { return format_double(v); }
  static std::string field(const std::string& s) { return s; }
  static std::string field(const char* s) { return s; }
  template <class T>
    requires std::is_integral_v<T>
  static std::string field(T v) {
    return std::to_string(v);
  }

  static std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
      if (c == '"') out += '"';
      out += c;
    }
    return out + '"';
  }

  std::ostream& out_;
  std::size_t columns_;
};

}  // namespace calibra
