#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "calibra/diagnostics.hpp"
#include "calibra/io.hpp"

using namespace calibra;

namespace {

const std::string kSampleDir = CALIBRA_SAMPLE_DIR;

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

/// Runs `f`, expecting a ParseError, and returns it.
template <class F>
ParseError expect_parse_error(F&& f) {
  try {
    f();
  } catch (const ParseError& e) {
    return e;
  }
  ADD_FAILURE() << "expected a ParseError";
  return ParseError("", 0, 0, "");
}

}  // namespace

TEST(Io, LoadsSampleInstances) {
  const auto u = load_instance(kSampleDir + "/uniform_l06.json");
  EXPECT_EQ(u.distribution.kind(), ValueDistribution::Kind::uniform);
  EXPECT_EQ(u.prior.size(), 2u);
  EXPECT_EQ(u.prior.bidders(), 2u);
  EXPECT_DOUBLE_EQ(u.prior.min_ctr(), 0.6);
  EXPECT_EQ(u.reserve, 0.0);
  const auto p = load_instance(kSampleDir + "/poly_beta22.json");
  EXPECT_EQ(p.distribution.kind(), ValueDistribution::Kind::polynomial);
  EXPECT_NEAR(p.distribution.cdf(0.25), 6 * 0.0625 - 4 * 0.015625, 1e-12);  // F(v) = 6v^2 - 4v^3
  EXPECT_EQ(load_instance(kSampleDir + "/uniform_reserve.json").reserve, 0.3);
  EXPECT_EQ(load_instance(kSampleDir + "/exponential.json").distribution.kind(),
            ValueDistribution::Kind::exponential);
}

TEST(Io, SyntaxErrorsCarryLineAndColumn) {
  const std::string text = "{\n  \"distribution\": {\"kind\": \"uniform\", \"support\": [0, 1]},\n  \"ctr_prior\": [,]\n}";
  const auto e = expect_parse_error([&] { parse_instance(text, "bad.json"); });
  EXPECT_EQ(e.line(), 3);
  EXPECT_GT(e.column(), 0);
  EXPECT_NE(std::string(e.what()).find("bad.json:3:"), std::string::npos) << e.what();
  EXPECT_NE(std::string(e.what()).find("malformed JSON"), std::string::npos);
}

TEST(Io, SemanticErrorsPointAtTheOffendingValue) {
  const std::string text =
      "{\n"
      "  \"distribution\": {\"kind\": \"uniform\", \"support\": [0, 1]},\n"
      "  \"ctr_prior\": [\n"
      "    {\"r\": [1, 0.6], \"prob\": 0.5},\n"
      "    {\"r\": [0.6, 1.5], \"prob\": 0.5}\n"
      "  ]\n"
      "}\n";
  const auto e = expect_parse_error([&] { parse_instance(text, "x.json"); });
  EXPECT_EQ(e.line(), 5);
  EXPECT_NE(std::string(e.what()).find("/ctr_prior/1/r/1"), std::string::npos) << e.what();

  const auto kind = expect_parse_error(
      [] { parse_instance(R"({"distribution": {"kind": "cauchy"}, "ctr_prior": [{"r": [1], "prob": 1}]})"); });
  EXPECT_NE(std::string(kind.what()).find("unknown distribution kind"), std::string::npos);

  const auto missing = expect_parse_error([] { parse_instance(R"({"ctr_prior": [{"r": [1], "prob": 1}]})"); });
  EXPECT_NE(std::string(missing.what()).find("distribution"), std::string::npos);

  const auto n = expect_parse_error([] {
    parse_instance(R"({"distribution": {"kind": "exponential", "rate": 1}, "ctr_prior": [{"r": [1, 1], "prob": 1}], "n": 3})");
  });
  EXPECT_NE(std::string(n.what()).find("/n"), std::string::npos);

  const auto sum = expect_parse_error([] {
    parse_instance(R"({"distribution": {"kind": "exponential", "rate": 1},
                       "ctr_prior": [{"r": [1, 1], "prob": 0.5}, {"r": [1, 0.5], "prob": 0.4}]})");
  });
  EXPECT_NE(std::string(sum.what()).find("sum"), std::string::npos);
  EXPECT_EQ(sum.line(), 2);
}

TEST(Io, SlightlyOffProbabilitiesAreRenormalised) {
  std::vector<std::string> warnings;
  set_warning_handler([&](const std::string& m) { warnings.push_back(m); });
  const auto inst = parse_instance(R"({"distribution": {"kind": "uniform", "support": [0, 1]},
      "ctr_prior": [{"r": [1, 0.6], "prob": 0.5000000001}, {"r": [0.6, 1], "prob": 0.5}]})");
  const auto exact = parse_instance(R"({"distribution": {"kind": "uniform", "support": [0, 1]},
      "ctr_prior": [{"r": [1, 0.6], "prob": 0.5}, {"r": [0.6, 1], "prob": 0.5}]})");
  set_warning_handler({});
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings.front().find("renormalised"), std::string::npos);
  EXPECT_NEAR(inst.prior[0].prob + inst.prior[1].prob, 1.0, 1e-15);
  EXPECT_EQ(exact.prior[0].prob, 0.5);
}

TEST(Io, SchemeRoundTrip) {
  const auto con = construct_simple(0.6, ValueDistribution::uniform(0.0, 1.0));
  const std::string text = scheme_to_json(con.scheme).dump(2);
  const auto back = parse_scheme(text);
  ASSERT_EQ(back.size(), con.scheme.size());
  for (std::size_t k = 0; k < back.size(); ++k) {
    const auto& a = con.scheme.entries()[k];
    const auto& b = back.entries()[k];
    EXPECT_EQ(a.r, b.r);
    for (std::size_t i = 0; i < a.s.size(); ++i) EXPECT_NEAR(a.s[i], b.s[i], 1e-12);
    EXPECT_NEAR(a.mass, b.mass, 1e-12);
  }
  EXPECT_LE(max_calibration_residual(back), 1e-12);
  // The wrapped form {"scheme": [...]} parses to the same scheme.
  Json wrapped;
  wrapped["scheme"] = scheme_to_json(con.scheme);
  EXPECT_EQ(parse_scheme(wrapped.dump()).size(), back.size());
}

TEST(Io, SchemeValidation) {
  EXPECT_THROW(parse_scheme(R"([{"r": [1, 0.6], "s": [1, 0.9], "mass": -0.1}])"), ValidationError);
  EXPECT_THROW(parse_scheme(R"([{"r": [1, 0.6], "s": [1], "mass": 0.1}])"), ValidationError);
  EXPECT_THROW(parse_scheme(R"([{"r": [1, 0.6], "s": [1, 0], "mass": 0.1}])"), ValidationError);
  EXPECT_THROW(parse_scheme(R"({"entries": []})"), ValidationError);
}

TEST(Io, InstanceSerialisationRoundTrip) {
  const auto inst = load_instance(kSampleDir + "/poly_beta22.json");
  const auto text = instance_to_json(inst.distribution, inst.prior, 0.25).dump();
  const auto again = parse_instance(text);
  EXPECT_EQ(again.reserve, 0.25);
  EXPECT_EQ(again.prior.size(), inst.prior.size());
  for (double v : {0.05, 0.2, 0.4}) EXPECT_DOUBLE_EQ(again.distribution.pdf(v), inst.distribution.pdf(v));
}

TEST(Io, CsvWriterParsesBack) {
  std::ostringstream out;
  {
    CsvWriter csv(out, {"name", "value", "count"});
    csv.row(std::string("plain"), 0.1, 3);
    csv.row(std::string("with,comma"), 1.0 / 3.0, 0);
    csv.row("say \"hi\"", std::nan(""), 7);
  }
  const auto lines = split_lines(out.str());
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "name,value,count");
  auto f = split_fields(lines[1]);
  ASSERT_EQ(f.size(), 3u);
  EXPECT_EQ(f[0], "plain");
  EXPECT_EQ(std::stod(f[1]), 0.1);
  EXPECT_EQ(f[2], "3");
  f = split_fields(lines[2]);
  EXPECT_EQ(f[0], "with,comma");
  EXPECT_EQ(std::stod(f[1]), 1.0 / 3.0);  // %.17g round-trips exactly
  f = split_fields(lines[3]);
  EXPECT_EQ(f[0], "say \"hi\"");
  EXPECT_EQ(f[1], "nan");
  EXPECT_EQ(format_double(std::numeric_limits<double>::infinity()), "inf");
}
