#include "app.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "covlab/bounds.hpp"
#include "covlab/error.hpp"
#include "covlab/specialfn.hpp"
#include "covlab/verify.hpp"

namespace covlab::app {

using nlohmann::json;

namespace {

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

std::string pointer_token(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

// ------------------------------------------------------------ n expressions

class ExprParser {
 public:
  ExprParser(const std::string& text, double p) : s_(text), p_(p) {}

  double parse() {
    const double v = expr();
    skip();
    if (i_ != s_.size()) fail("unexpected '" + std::string(1, s_[i_]) + "'");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorKind::ConfigError, "n rule \"" + s_ + "\": " + msg);
  }
  void skip() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
  }
  bool eat(char c) {
    skip();
    if (i_ < s_.size() && s_[i_] == c) {
      ++i_;
      return true;
    }
    return false;
  }
  double expr() {
    double v = term();
    for (;;) {
      if (eat('+')) v += term();
      else if (eat('-')) v -= term();
      else return v;
    }
  }
  double term() {
    double v = unary();
    for (;;) {
      if (eat('*')) v *= unary();
      else if (eat('/')) v /= unary();
      else return v;
    }
  }
  double unary() {
    if (eat('-')) return -unary();
    const double base = primary();
    if (eat('^')) return std::pow(base, unary());
    return base;
  }
  double primary() {
    skip();
    if (i_ >= s_.size()) fail("unexpected end");
    if (eat('(')) {
      const double v = expr();
      if (!eat(')')) fail("missing ')'");
      return v;
    }
    const char c = s_[i_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      const double v = std::stod(s_.substr(i_), &used);
      i_ += used;
      return v;
    }
    std::string word;
    while (i_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[i_]))) word += s_[i_++];
    if (word == "p") return p_;
    static const std::map<std::string, double (*)(double)> fns = {
        {"ceil", [](double x) { return std::ceil(x); }},
        {"floor", [](double x) { return std::floor(x); }},
        {"round", [](double x) { return std::round(x); }},
        {"sqrt", [](double x) { return std::sqrt(x); }},
    };
    const auto it = fns.find(word);
    if (it == fns.end()) fail("unknown symbol '" + word + "'");
    if (!eat('(')) fail("expected '(' after " + word);
    const double v = expr();
    if (!eat(')')) fail("missing ')'");
    return it->second(v);
  }

  const std::string& s_;
  double p_;
  std::size_t i_ = 0;
};

// ------------------------------------------------------- JSON line lookup

class LineScanner {
 public:
  LineScanner(const std::string& text, const std::string& target) : s_(text), target_(target) {}

  std::size_t run() {
    value("");
    return found_;
  }

 private:
  void ws() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) {
      if (s_[i_] == '\n') ++line_;
      ++i_;
    }
  }
  std::string str() {
    std::string out;
    ++i_;
    while (i_ < s_.size() && s_[i_] != '"') {
      if (s_[i_] == '\\' && i_ + 1 < s_.size()) {
        out += s_[i_ + 1];
        i_ += 2;
        continue;
      }
      out += s_[i_++];
    }
    ++i_;
    return out;
  }
  void value(const std::string& path) {
    ws();
    if (i_ >= s_.size()) return;
    if (found_ == 0 && path == target_) found_ = line_;
    const char c = s_[i_];
    if (c == '{') {
      ++i_;
      ws();
      if (i_ < s_.size() && s_[i_] == '}') {
        ++i_;
        return;
      }
      while (i_ < s_.size()) {
        ws();
        const std::string key = str();
        ws();
        ++i_;  // ':'
        value(path + "/" + pointer_token(key));
        ws();
        if (i_ < s_.size() && s_[i_] == ',') {
          ++i_;
          continue;
        }
        ++i_;
        return;
      }
    } else if (c == '[') {
      ++i_;
      ws();
      if (i_ < s_.size() && s_[i_] == ']') {
        ++i_;
        return;
      }
      for (std::size_t idx = 0; i_ < s_.size(); ++idx) {
        value(path + "/" + std::to_string(idx));
        ws();
        if (i_ < s_.size() && s_[i_] == ',') {
          ++i_;
          continue;
        }
        ++i_;
        return;
      }
    } else if (c == '"') {
      str();
    } else {
      while (i_ < s_.size() && std::string_view(",]} \t\r\n").find(s_[i_]) == std::string_view::npos) {
        ++i_;
      }
    }
  }

  const std::string& s_;
  const std::string& target_;
  std::size_t i_ = 0;
  std::size_t line_ = 1;
  std::size_t found_ = 0;
};

// ---------------------------------------------------------- config parsing

class ConfigReader {
 public:
  ConfigReader(std::string source, const std::string& text) : source_(std::move(source)), text_(text) {}

  [[noreturn]] void fail(const std::string& ptr, const std::string& msg) const {
    std::ostringstream os;
    os << source_;
    if (!text_.empty()) {
      if (const std::size_t line = json_pointer_line(text_, ptr); line > 0) os << ':' << line;
    }
    os << ": " << (ptr.empty() ? "/" : ptr) << ": " << msg;
    throw Error(ErrorKind::ConfigError, os.str());
  }

  void check_keys(const json& obj, const std::string& ptr, std::initializer_list<const char*> allowed) const {
    if (!obj.is_object()) fail(ptr, "expected an object");
    for (const auto& [key, value] : obj.items()) {
      const bool known = std::any_of(allowed.begin(), allowed.end(),
                                     [&](const char* a) { return key == a; });
      if (!known) fail(ptr + "/" + pointer_token(key), "unknown key '" + key + "'");
    }
  }

  std::uint64_t get_uint(const json& v, const std::string& ptr, std::uint64_t min_value) const {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      fail(ptr, "expected a non-negative integer");
    }
    const auto x = v.get<std::uint64_t>();
    if (x < min_value) fail(ptr, "must be at least " + std::to_string(min_value));
    return x;
  }

  double get_number(const json& v, const std::string& ptr) const {
    if (!v.is_number()) fail(ptr, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(ptr, "must be finite");
    return x;
  }

  std::string get_string(const json& v, const std::string& ptr) const {
    if (!v.is_string()) fail(ptr, "expected a string");
    return v.get<std::string>();
  }

  std::pair<TruthSpec, std::string> truth(const json& j, const std::string& ptr, std::size_t p) const {
    check_keys(j, ptr, {"kind", "lo", "hi", "scale", "matrix"});
    if (!j.contains("kind")) fail(ptr, "missing 'kind'");
    const std::string kind = get_string(j["kind"], ptr + "/kind");
    const auto forbid = [&](std::initializer_list<const char*> keys) {
      for (const char* k : keys) {
        if (j.contains(k)) fail(ptr + "/" + k, "not valid for truth kind '" + kind + "'");
      }
    };
    if (kind == "diagonal") {
      forbid({"scale", "matrix"});
      DiagonalTruth t;
      if (j.contains("lo")) t.lo = get_number(j["lo"], ptr + "/lo");
      if (j.contains("hi")) t.hi = get_number(j["hi"], ptr + "/hi");
      if (!(t.lo >= 0.0 && t.lo < t.hi)) fail(ptr, "need 0 <= lo < hi");
      return {t, kind};
    }
    if (kind == "full") {
      forbid({"lo", "hi", "matrix"});
      FullTruth t;
      if (j.contains("scale")) t.scale = get_number(j["scale"], ptr + "/scale");
      if (!(t.scale > 0.0)) fail(ptr + "/scale", "must be positive");
      return {t, kind};
    }
    if (kind == "identity") {
      forbid({"lo", "hi", "scale", "matrix"});
      return {FixedTruth{SymmetricMatrix::identity(p)}, kind};
    }
    if (kind == "fixed") {
      forbid({"lo", "hi", "scale"});
      if (!j.contains("matrix")) fail(ptr, "fixed truth needs 'matrix'");
      const json& m = j["matrix"];
      const std::string mptr = ptr + "/matrix";
      if (!m.is_array() || m.size() != p) fail(mptr, "expected " + std::to_string(p) + " rows");
      Matrix a(p, p);
      for (std::size_t i = 0; i < p; ++i) {
        const std::string rptr = mptr + "/" + std::to_string(i);
        if (!m[i].is_array() || m[i].size() != p) fail(rptr, "expected " + std::to_string(p) + " entries");
        for (std::size_t k = 0; k < p; ++k) a(i, k) = get_number(m[i][k], rptr + "/" + std::to_string(k));
      }
      try {
        SpdMatrix spd{SymmetricMatrix(a)};
        return {FixedTruth{spd.sym()}, kind};
      } catch (const Error& e) {
        fail(mptr, e.what());
      }
    }
    fail(ptr + "/kind", "unknown truth kind '" + kind + "' (diagonal, full, identity, fixed)");
  }

  NuRule nu(const json& v, const std::string& ptr) const {
    if (v.is_number()) return NuRule::constant(get_number(v, ptr));
    const std::string s = get_string(v, ptr);
    if (s == "p") return {NuRule::Kind::P, 0.0};
    if (s == "n") return {NuRule::Kind::N, 0.0};
    if (s == "sqrt(n/p)") return {NuRule::Kind::SqrtNOverP, 0.0};
    if (s == "p+1") return {NuRule::Kind::PPlusOne, 0.0};
    if (s == "0") return {NuRule::Kind::Zero, 0.0};
    fail(ptr, "unknown nu rule '" + s + "' (number, p, n, sqrt(n/p), p+1, 0)");
  }

  PriorSpec prior(const json& j, const std::string& ptr) const {
    check_keys(j, ptr, {"type", "nu", "scale", "gamma", "k1", "k2"});
    PriorSpec out;
    const std::string type = j.contains("type") ? get_string(j["type"], ptr + "/type") : "iw";
    if (type == "iw") out.kind = PriorSpec::Kind::InverseWishart;
    else if (type == "mixture") out.kind = PriorSpec::Kind::Mixture;
    else if (type == "truncated_iw") out.kind = PriorSpec::Kind::TruncatedIw;
    else fail(ptr + "/type", "unknown prior type '" + type + "' (iw, mixture, truncated_iw)");
    if (j.contains("nu")) out.nu = nu(j["nu"], ptr + "/nu");
    if (j.contains("scale")) {
      out.scale_multiple = get_number(j["scale"], ptr + "/scale");
      if (out.scale_multiple < 0.0) fail(ptr + "/scale", "must be >= 0");
    }
    if (j.contains("gamma")) {
      if (out.kind != PriorSpec::Kind::Mixture) fail(ptr + "/gamma", "only valid for mixture priors");
      out.gamma = get_number(j["gamma"], ptr + "/gamma");
    }
    for (const char* key : {"k1", "k2"}) {
      if (!j.contains(key)) continue;
      if (out.kind != PriorSpec::Kind::TruncatedIw) {
        fail(ptr + "/" + key, "only valid for truncated_iw priors");
      }
      (std::string(key) == "k1" ? out.k1 : out.k2) = get_number(j[key], ptr + "/" + key);
    }
    if (out.kind == PriorSpec::Kind::TruncatedIw && !(j.contains("k1") && j.contains("k2"))) {
      fail(ptr, "truncated_iw needs k1 and k2");
    }
    return out;
  }

  EstimatorSpec estimator(const json& j, const std::string& ptr) const {
    check_keys(j, ptr, {"kind", "prior", "k"});
    if (!j.contains("kind")) fail(ptr, "missing 'kind'");
    const std::string kind = get_string(j["kind"], ptr + "/kind");
    static const std::map<std::string, EstimatorKind> kinds = {
        {"posterior", EstimatorKind::PosteriorLaw},
        {"posterior_mean", EstimatorKind::PosteriorMean},
        {"sample_covariance", EstimatorKind::SampleCovariance},
        {"tapering", EstimatorKind::Tapering},
        {"logdet_mle", EstimatorKind::LogDetMle},
        {"logdet_umvue", EstimatorKind::LogDetUmvue},
    };
    const auto it = kinds.find(kind);
    if (it == kinds.end()) {
      fail(ptr + "/kind", "unknown estimator '" + kind +
                              "' (posterior, posterior_mean, sample_covariance, tapering, "
                              "logdet_mle, logdet_umvue)");
    }
    EstimatorSpec out;
    out.kind = it->second;
    if (j.contains("prior")) {
      if (!out.uses_prior()) fail(ptr + "/prior", "estimator '" + kind + "' takes no prior");
      out.prior = prior(j["prior"], ptr + "/prior");
    }
    if (j.contains("k")) {
      if (out.kind != EstimatorKind::Tapering) fail(ptr + "/k", "only valid for tapering");
      out.taper_k = get_uint(j["k"], ptr + "/k", 2);
    }
    return out;
  }

  LossSpec loss(const json& j, const std::string& ptr, std::size_t p) const {
    check_keys(j, ptr, {"family", "power", "scale", "phi"});
    if (!j.contains("family")) fail(ptr, "missing 'family'");
    const std::string family = get_string(j["family"], ptr + "/family");
    LossSpec out;
    if (family == "spectral") out = LossSpec::spectral();
    else if (family == "frobenius") out = LossSpec::frobenius();
    else if (family == "bregman") out = LossSpec::bregman(PhiSpec::stein());
    else if (family == "logdet") out = LossSpec::logdet();
    else if (family == "precision") out = LossSpec::precision();
    else fail(ptr + "/family", "unknown loss family '" + family + "' (spectral, frobenius, bregman, logdet, precision)");
    if (j.contains("power")) {
      if (out.family != LossFamily::SqSpectral && out.family != LossFamily::SqFrobenius &&
          out.family != LossFamily::SqSpectralPrecision) {
        fail(ptr + "/power", "power applies to spectral, frobenius and precision losses only");
      }
      const auto power = get_uint(j["power"], ptr + "/power", 1);
      if (power > 2) fail(ptr + "/power", "must be 1 or 2");
      out.power = static_cast<int>(power);
    }
    if (j.contains("scale")) {
      const json& s = j["scale"];
      if (s.is_string()) {
        if (s.get<std::string>() != "1/p") fail(ptr + "/scale", "expected a number or \"1/p\"");
        out.scale = 1.0 / static_cast<double>(p);
      } else {
        out.scale = get_number(s, ptr + "/scale");
      }
      if (!(out.scale > 0.0)) fail(ptr + "/scale", "must be positive");
    }
    if (j.contains("phi")) {
      if (out.family != LossFamily::Bregman) fail(ptr + "/phi", "only valid for bregman losses");
      const std::string phi = get_string(j["phi"], ptr + "/phi");
      if (phi == "stein") out.phi = PhiSpec::stein();
      else if (phi == "von_neumann") out.phi = PhiSpec::von_neumann();
      else if (phi == "squared_euclid") out.phi = PhiSpec::squared_euclid();
      else fail(ptr + "/phi", "unknown phi '" + phi + "' (stein, von_neumann, squared_euclid)");
    }
    return out;
  }

  std::size_t n_value(const json& v, const std::string& ptr, std::size_t p) const {
    if (v.is_number()) return get_uint(v, ptr, 1);
    const std::string rule = get_string(v, ptr);
    double x = 0.0;
    try {
      x = eval_n_expression(rule, static_cast<double>(p));
    } catch (const Error& e) {
      fail(ptr, e.what());
    }
    const double r = std::round(x);
    if (!std::isfinite(x) || std::abs(x - r) > 1e-9 * std::max(1.0, std::abs(x))) {
      fail(ptr, "rule \"" + rule + "\" gives non-integer n = " + fmt17(x) + "; wrap it in ceil()");
    }
    if (r < 1.0) fail(ptr, "rule \"" + rule + "\" gives n < 1");
    return static_cast<std::size_t>(r);
  }

  std::vector<std::size_t> n_values(const json& v, const std::string& ptr, std::size_t p) const {
    std::vector<std::size_t> out;
    if (v.is_array()) {
      if (v.empty()) fail(ptr, "empty n list");
      for (std::size_t i = 0; i < v.size(); ++i) out.push_back(n_value(v[i], ptr + "/" + std::to_string(i), p));
    } else {
      out.push_back(n_value(v, ptr, p));
    }
    return out;
  }

 private:
  std::string source_;
  const std::string& text_;
};

std::string loss_label(const LossSpec& loss) {
  std::string out = to_string(loss.family);
  if (loss.family == LossFamily::Bregman) out += ":" + loss.phi.name();
  return out;
}

std::string cell_label(const Cell& c) {
  const Scenario& s = c.scenario;
  std::string out = "n=" + std::to_string(s.n) + ", loss=" + loss_label(s.loss) +
                    ", estimator=" + s.estimator.label();
  if (s.estimator.uses_prior()) {
    out += ", prior=" + s.estimator.prior.kind_label() + "(nu=" + s.estimator.prior.nu.label() + ")";
  }
  return out;
}

std::size_t auto_threads() {
  return std::max(1u, std::thread::hardware_concurrency());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::string> csv_row(const Cell& cell, const RiskEstimate* est, double wall_ms,
                                 const std::string& reason) {
  const Scenario& s = cell.scenario;
  const bool prior = s.estimator.uses_prior();
  std::vector<std::string> row = {
      cell.scenario_id,
      std::to_string(s.p),
      std::to_string(s.n),
      cell.truth_kind,
      prior ? s.estimator.prior.kind_label() : "none",
      prior ? s.estimator.prior.nu.label() : "none",
      loss_label(s.loss),
      std::to_string(s.loss.power),
      fmt17(s.loss.scale),
      s.estimator.label(),
      est ? fmt17(est->mean) : "",
      est ? fmt17(est->se) : "",
      std::to_string(s.replicates),
      est ? std::to_string(est->inner_draws) : "",
      est ? to_string(est->method) : to_string(planned_inner_method(s)),
      std::to_string(s.base_seed),
      std::to_string(static_cast<long long>(std::llround(wall_ms))),
      reason,
  };
  return row;
}

std::string join_csv(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out += ',';
    out += csv_escape(fields[i]);
  }
  return out;
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("COVLAB_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v, &end, 10);
  if (end == nullptr || *end != '\0') {
    throw Error(ErrorKind::ConfigError, "COVLAB_SEED must be an unsigned integer");
  }
  return static_cast<std::uint64_t>(x);
}

}  // namespace

double eval_n_expression(const std::string& expr, double p) { return ExprParser(expr, p).parse(); }

std::size_t json_pointer_line(const std::string& text, const std::string& pointer) {
  return LineScanner(text, pointer).run();
}

Config parse_config(const json& doc, const std::string& source_name, const std::string& source_text) {
  const ConfigReader rd(source_name, source_text);
  rd.check_keys(doc, "", {"format_version", "output_path", "threads", "scenarios"});
  Config cfg;
  if (!doc.contains("format_version")) rd.fail("", "missing 'format_version'");
  if (!doc["format_version"].is_number_integer() || doc["format_version"].get<int>() != 1) {
    rd.fail("/format_version", "unsupported format_version (expected 1)");
  }
  if (doc.contains("output_path")) cfg.output_path = rd.get_string(doc["output_path"], "/output_path");
  if (doc.contains("threads")) {
    const json& t = doc["threads"];
    if (t.is_string()) {
      if (t.get<std::string>() != "auto") rd.fail("/threads", "expected a count or \"auto\"");
      cfg.threads = auto_threads();
    } else {
      cfg.threads = rd.get_uint(t, "/threads", 1);
    }
  }
  if (!doc.contains("scenarios") || !doc["scenarios"].is_array() || doc["scenarios"].empty()) {
    rd.fail("/scenarios", "expected a non-empty array of scenarios");
  }

  std::set<std::string> ids;
  const json& list = doc["scenarios"];
  for (std::size_t si = 0; si < list.size(); ++si) {
    const std::string ptr = "/scenarios/" + std::to_string(si);
    const json& sj = list[si];
    rd.check_keys(sj, ptr,
                  {"id", "p", "n", "truth", "per_replicate_truth", "estimators", "loss", "losses",
                   "replicates", "posterior_draws", "base_seed", "tag"});
    for (const char* key : {"id", "p", "n", "estimators"}) {
      if (!sj.contains(key)) rd.fail(ptr, std::string("missing '") + key + "'");
    }
    const std::string id = rd.get_string(sj["id"], ptr + "/id");
    if (id.empty()) rd.fail(ptr + "/id", "must not be empty");
    if (!ids.insert(id).second) rd.fail(ptr + "/id", "duplicate scenario id '" + id + "'");

    Scenario base;
    base.p = rd.get_uint(sj["p"], ptr + "/p", 1);
    std::string truth_kind = "diagonal";
    if (sj.contains("truth")) std::tie(base.truth, truth_kind) = rd.truth(sj["truth"], ptr + "/truth", base.p);
    if (sj.contains("per_replicate_truth")) {
      if (!sj["per_replicate_truth"].is_boolean()) rd.fail(ptr + "/per_replicate_truth", "expected a boolean");
      base.truth_per_replicate = sj["per_replicate_truth"].get<bool>();
    }
    if (sj.contains("replicates")) base.replicates = rd.get_uint(sj["replicates"], ptr + "/replicates", 2);
    if (sj.contains("posterior_draws")) {
      base.posterior_draws = rd.get_uint(sj["posterior_draws"], ptr + "/posterior_draws", 1);
    }
    if (sj.contains("base_seed")) base.base_seed = rd.get_uint(sj["base_seed"], ptr + "/base_seed", 0);
    base.tag = sj.contains("tag") ? rd.get_uint(sj["tag"], ptr + "/tag", 0) : fnv1a(id);

    const std::vector<std::size_t> ns = rd.n_values(sj["n"], ptr + "/n", base.p);

    if (sj.contains("loss") == sj.contains("losses")) rd.fail(ptr, "give exactly one of 'loss' or 'losses'");
    std::vector<LossSpec> losses;
    if (sj.contains("loss")) {
      losses.push_back(rd.loss(sj["loss"], ptr + "/loss", base.p));
    } else {
      const json& lj = sj["losses"];
      if (!lj.is_array() || lj.empty()) rd.fail(ptr + "/losses", "expected a non-empty array");
      for (std::size_t li = 0; li < lj.size(); ++li) {
        losses.push_back(rd.loss(lj[li], ptr + "/losses/" + std::to_string(li), base.p));
      }
    }

    const json& ej = sj["estimators"];
    if (!ej.is_array() || ej.empty()) rd.fail(ptr + "/estimators", "expected a non-empty array");
    std::vector<EstimatorSpec> estimators;
    for (std::size_t ei = 0; ei < ej.size(); ++ei) {
      estimators.push_back(rd.estimator(ej[ei], ptr + "/estimators/" + std::to_string(ei)));
    }

    for (std::size_t n : ns) {
      for (const LossSpec& loss : losses) {
        for (const EstimatorSpec& est : estimators) {
          Cell cell{id, truth_kind, base};
          cell.scenario.n = n;
          cell.scenario.loss = loss;
          cell.scenario.estimator = est;
          try {
            validate_scenario(cell.scenario);
          } catch (const Error& e) {
            rd.fail(ptr, cell_label(cell) + ": " + e.what());
          }
          cfg.cells.push_back(std::move(cell));
        }
      }
    }
  }
  return cfg;
}

Config load_config(const std::string& path) {
  const std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::ConfigError, path + ": " + e.what());
  }
  return parse_config(doc, path, text);
}

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {
      "scenario_id", "p",         "n",           "truth_kind",   "prior_kind", "nu_rule",
      "loss_family", "loss_power", "loss_scale", "estimator",    "risk_mean",  "risk_se",
      "replicates",  "inner_draws", "inner_method", "base_seed", "wall_ms",    "reason",
  };
  return cols;
}

std::string csv_header() { return join_csv(csv_columns()); }

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back() += c;
    }
  }
  return out;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const SimulateOptions& options, std::ostream& out, std::ostream& err) {
  Config cfg;
  std::optional<std::uint64_t> seed;
  try {
    cfg = load_config(options.config_path);
    seed = options.seed ? options.seed : env_seed();
  } catch (const Error& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  const std::string out_path = options.out_path.value_or(cfg.output_path);
  if (out_path.empty()) {
    err << "config error: no output path (use --out or output_path)\n";
    return kExitConfig;
  }
  const std::size_t threads = options.threads.value_or(cfg.threads);
  if (threads == 0) {
    err << "config error: threads must be at least 1\n";
    return kExitConfig;
  }
  std::ofstream csv(out_path, std::ios::binary);
  if (!csv) {
    err << "config error: cannot write '" << out_path << "'\n";
    return kExitConfig;
  }

  csv << csv_header() << '\n';
  std::size_t failures = 0;
  for (Cell& cell : cfg.cells) {
    if (seed) cell.scenario.base_seed = *seed;
    const auto t0 = std::chrono::steady_clock::now();
    std::optional<RiskEstimate> est;
    std::string reason;
    try {
      est = evaluate_scenario(cell.scenario, RunOptions{threads});
    } catch (const std::exception& e) {
      reason = e.what();
    }
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    csv << join_csv(csv_row(cell, est ? &*est : nullptr, ms, reason)) << '\n';
    if (!est) {
      ++failures;
      err << "scenario " << cell.scenario_id << " (" << cell_label(cell) << ") failed: " << reason << '\n';
    }
  }
  csv.flush();
  out << "wrote " << cfg.cells.size() << " rows to " << out_path;
  if (failures > 0) out << " (" << failures << " failed)";
  out << '\n';
  return failures > 0 ? kExitRuntime : kExitOk;
}

// ------------------------------------------------------------------ rates

int cmd_rates(const RatesOptions& options, std::ostream& out, std::ostream& err) {
  std::ifstream in(options.in_path, std::ios::binary);
  if (!in) {
    err << "config error: cannot open '" << options.in_path << "'\n";
    return kExitConfig;
  }
  std::string line;
  if (!std::getline(in, line)) {
    err << "config error: '" << options.in_path << "' is empty\n";
    return kExitConfig;
  }
  const std::vector<std::string> header = csv_split(line);
  const auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };

  std::vector<std::string> keys;
  for (std::string k : options.group) {
    if (k == "loss") k = "loss_family";
    if (k.empty()) continue;
    if (!column(k)) {
      err << "config error: unknown group column '" << k << "'\n";
      return kExitConfig;
    }
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  // Rows from different estimators never share a fit.
  for (const char* series : {"truth_kind", "estimator", "prior_kind", "nu_rule", "loss_family", "loss_power"}) {
    if (column(series) && std::find(keys.begin(), keys.end(), series) == keys.end()) keys.emplace_back(series);
  }
  const auto n_col = column("n");
  const auto risk_col = column("risk_mean");
  if (!n_col || !risk_col) {
    err << "config error: input needs 'n' and 'risk_mean' columns\n";
    return kExitConfig;
  }

  std::vector<std::vector<std::string>> group_keys;
  std::map<std::vector<std::string>, std::vector<std::pair<double, double>>> groups;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> row = csv_split(line);
    if (row.size() != header.size()) {
      err << "config error: row with " << row.size() << " fields, header has " << header.size() << '\n';
      return kExitConfig;
    }
    if (row[*risk_col].empty()) continue;  // error row
    std::vector<std::string> key;
    for (const std::string& k : keys) key.push_back(row[*column(k)]);
    if (!groups.contains(key)) group_keys.push_back(key);
    try {
      groups[key].emplace_back(std::stod(row[*n_col]), std::stod(row[*risk_col]));
    } catch (const std::exception&) {
      err << "config error: non-numeric n or risk_mean in '" << line << "'\n";
      return kExitConfig;
    }
  }

  std::vector<std::string> out_header = keys;
  for (const char* c : {"slope", "intercept", "r2", "points", "status"}) out_header.emplace_back(c);
  std::ostringstream table;
  table << join_csv(out_header) << '\n';
  for (const auto& key : group_keys) {
    std::string label;
    for (std::size_t i = 0; i < keys.size(); ++i) label += (i ? " " : "") + keys[i] + "=" + key[i];
    std::vector<std::string> fields = key;
    const auto& pts = groups[key];
    try {
      const RateFit fit = rate_fit(pts);
      out << label << ": slope " << std::fixed << std::setprecision(4) << fit.slope << ", r2 "
          << fit.r2 << ", points " << pts.size() << '\n'
          << std::defaultfloat;
      for (const std::string& v : {fmt17(fit.slope), fmt17(fit.intercept), fmt17(fit.r2),
                                   std::to_string(pts.size()), std::string("ok")}) {
        fields.push_back(v);
      }
    } catch (const Error& e) {
      out << label << ": " << e.what() << '\n';
      for (const std::string& v : {std::string(), std::string(), std::string(),
                                   std::to_string(pts.size()), std::string(e.what())}) {
        fields.push_back(v);
      }
    }
    table << join_csv(fields) << '\n';
  }
  if (options.out_path) {
    std::ofstream o(*options.out_path, std::ios::binary);
    if (!o) {
      err << "config error: cannot write '" << *options.out_path << "'\n";
      return kExitConfig;
    }
    o << table.str();
  }
  return kExitOk;
}

// ----------------------------------------------------------------- bounds

int cmd_bounds(const BoundsOptions& o, std::ostream& out, std::ostream&) {
  const auto row = [&](const std::string& name, const std::string& value, const std::string& detail) {
    out << std::left << std::setw(26) << name << std::setw(26) << value << detail << '\n';
  };
  out << std::left << std::setw(26) << "bound" << std::setw(26) << "value" << "detail" << '\n';
  bool failed = false;

  const std::size_t p_eff = std::min(o.p, o.n);
  const double c = o.c.value_or(0.5 * std::min(1.0, o.tau2 / o.tau1 - 1.0));
  const double eps = c * std::sqrt(static_cast<double>(p_eff) / static_cast<double>(o.n));
  const std::string eps_detail = "p_eff=" + std::to_string(p_eff) + " n=" + std::to_string(o.n) +
                                 " eps=" + fmt17(eps);
  try {
    const double xi = xi_exact(p_eff, static_cast<double>(o.n), eps);
    row("xi", fmt17(xi), eps_detail);
    row("lecam_two_point", fmt17(lecam_two_point(0.0, o.tau2 * eps, xi)),
        "theta0=0 theta1=tau2*eps=" + fmt17(o.tau2 * eps));
  } catch (const Error& e) {
    row("xi", "error", e.what());
    failed = true;
  }
  try {
    row("spectral_lower_bound", fmt17(spectral_lower_bound(o.p, o.n, o.tau1, o.tau2, c)),
        "tau1=" + fmt17(o.tau1) + " tau2=" + fmt17(o.tau2) + " c=" + fmt17(c));
  } catch (const Error& e) {
    row("spectral_lower_bound", "error", e.what());
    failed = true;
  }
  const HypercubeSpec cube{o.p, o.n, o.tau.value_or(o.tau2), o.c1};
  try {
    row("assouad_frobenius_bound", fmt17(assouad_frobenius_bound(cube)),
        "k=" + std::to_string(cube.k()) + " c1=" + fmt17(cube.c1) + " tau=" + fmt17(cube.tau));
  } catch (const Error& e) {
    row("assouad_frobenius_bound", "error", e.what());
    failed = true;
  }
  return failed ? kExitRuntime : kExitOk;
}

// ----------------------------------------------------------------- verify

int cmd_verify(const VerifyCommandOptions& options, std::ostream& out, std::ostream& err) {
  const auto& names = verify_suite_names();
  if (options.suite != "all" && std::find(names.begin(), names.end(), options.suite) == names.end()) {
    err << "usage error: unknown suite '" << options.suite << "' (all";
    for (const auto& n : names) err << ", " << n;
    err << ")\n";
    return kExitConfig;
  }
  if (options.inject_fault && *options.inject_fault != "digamma") {
    err << "usage error: unknown fault '" << *options.inject_fault << "' (digamma)\n";
    return kExitConfig;
  }

  struct FaultGuard {
    explicit FaultGuard(bool on) {
      if (on) specialfn::testing::set_digamma_offset(1e-3);
    }
    ~FaultGuard() { specialfn::testing::set_digamma_offset(0.0); }
  } guard(options.inject_fault.has_value());

  std::vector<SuiteResult> results;
  try {
    results = run_verify(options.suite);
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }

  std::size_t total = 0;
  std::size_t failed = 0;
  json report;
  report["suites"] = json::array();
  for (const SuiteResult& s : results) {
    json js{{"suite", s.suite}, {"pass", s.pass()}, {"checks", json::array()}};
    for (const VerifyCheck& c : s.checks) {
      ++total;
      if (!c.pass) ++failed;
      out << (c.pass ? "PASS " : "FAIL ") << s.suite << '.' << c.name;
      if (!c.detail.empty()) out << "  " << c.detail;
      out << '\n';
      js["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    }
    report["suites"].push_back(std::move(js));
  }
  report["total_checks"] = total;
  report["failed_checks"] = failed;
  report["pass"] = failed == 0;
  if (options.inject_fault) report["injected_fault"] = *options.inject_fault;
  out << total - failed << '/' << total << " checks passed\n";

  if (options.report_path) {
    std::ofstream o(*options.report_path, std::ios::binary);
    if (!o) {
      err << "config error: cannot write '" << *options.report_path << "'\n";
      return kExitConfig;
    }
    o << report.dump(2) << '\n';
  }
  return failed == 0 ? kExitOk : kExitVerify;
}

// -------------------------------------------------------------------- CLI

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian covariance estimation risk simulator", "covlab"};
  app.require_subcommand(1);

  SimulateOptions sim;
  std::size_t sim_threads = 0;
  std::uint64_t sim_seed = 0;
  auto* simulate = app.add_subcommand("simulate", "Run the scenarios of a JSON config and write CSV");
  simulate->add_option("--config", sim.config_path, "Scenario config (JSON)")->required();
  auto* out_opt = simulate->add_option("--out", "CSV output path (overrides output_path)");
  auto* threads_opt = simulate->add_option("--threads", sim_threads, "Worker threads")->check(CLI::PositiveNumber);
  auto* seed_opt = simulate->add_option("--seed", sim_seed, "Override every base_seed");

  RatesOptions rates;
  std::string group = "p,loss";
  auto* rates_cmd = app.add_subcommand("rates", "Fit log-log rate slopes to a simulate CSV");
  rates_cmd->add_option("--in", rates.in_path, "CSV produced by simulate")->required();
  rates_cmd->add_option("--group", group, "Comma-separated grouping columns");
  auto* rates_out = rates_cmd->add_option("--out", "Write the rate table as CSV");

  BoundsOptions bounds;
  double c_value = 0.0;
  double tau_value = 0.0;
  auto* bounds_cmd = app.add_subcommand("bounds", "Print finite-n minimax lower bounds");
  bounds_cmd->add_option("--p", bounds.p)->required()->check(CLI::PositiveNumber);
  bounds_cmd->add_option("--n", bounds.n)->required()->check(CLI::PositiveNumber);
  bounds_cmd->add_option("--tau1", bounds.tau1)->required();
  bounds_cmd->add_option("--tau2", bounds.tau2)->required();
  auto* c_opt = bounds_cmd->add_option("--c", c_value, "Spectral perturbation scale");
  bounds_cmd->add_option("--c1", bounds.c1, "Assouad perturbation constant in (0, 1/3]");
  auto* tau_opt = bounds_cmd->add_option("--tau", tau_value, "Frobenius class radius (default tau2)");

  VerifyCommandOptions verify;
  auto* verify_cmd = app.add_subcommand("verify", "Run numeric verification suites");
  verify_cmd->add_option("suite", verify.suite, "Suite name or 'all'");
  auto* report_opt = verify_cmd->add_option("--report", "Write a JSON report to this path");
  auto* fault_opt = verify_cmd->add_option("--inject-fault", "Test-only fault injection (digamma)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (simulate->parsed()) {
      if (*out_opt) sim.out_path = out_opt->as<std::string>();
      if (*threads_opt) sim.threads = sim_threads;
      if (*seed_opt) sim.seed = sim_seed;
      return cmd_simulate(sim, out, err);
    }
    if (rates_cmd->parsed()) {
      std::stringstream ss(group);
      for (std::string k; std::getline(ss, k, ',');) rates.group.push_back(k);
      if (*rates_out) rates.out_path = rates_out->as<std::string>();
      return cmd_rates(rates, out, err);
    }
    if (bounds_cmd->parsed()) {
      if (*c_opt) bounds.c = c_value;
      if (*tau_opt) bounds.tau = tau_value;
      return cmd_bounds(bounds, out, err);
    }
    if (verify_cmd->parsed()) {
      if (*report_opt) verify.report_path = report_opt->as<std::string>();
      if (*fault_opt) verify.inject_fault = fault_opt->as<std::string>();
      return cmd_verify(verify, out, err);
    }
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace covlab::app
