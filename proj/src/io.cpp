#include "shufflevar/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "shufflevar/error.hpp"
#include "shufflevar/parallel.hpp"

namespace shufflevar {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  s = s.substr(first, last - first + 1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(trim(field));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::size_t parse_count(const std::string& text, const std::string& where) {
  std::size_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw Error(ErrorCode::ParseError, where + ": expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

std::vector<double> parse_list(const std::string& text, const std::string& where) {
  std::vector<double> out;
  for (const auto& f : split(text, ',')) out.push_back(parse_double(f, where));
  return out;
}

[[noreturn]] void bad_line(const std::string& source, std::size_t line, const std::string& what) {
  throw Error(ErrorCode::ParseError, source + ":" + std::to_string(line) + ": " + what);
}

RemlSpec parse_reml_family(const std::string& name) {
  if (name == "iid") return {RemlFamily::Iid, 3};
  if (name == "exp_nugget") return {RemlFamily::ExpNugget, 3};
  if (name.size() == 3 && name.rfind("ar", 0) == 0 && name[2] >= '1' && name[2] <= '3') {
    return {RemlFamily::Autoregressive, static_cast<std::size_t>(name[2] - '0')};
  }
  if (name == "ar") return {RemlFamily::Autoregressive, 3};
  throw Error(ErrorCode::ParseError, "unknown REML family '" + name +
                                         "' (iid, exp_nugget, ar1, ar2, ar3)");
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text, const std::string& where) {
  std::string s = trim(text);
  if (s == "NA" || s == "NaN" || s == "nan") return kNaN;
  if (!s.empty() && s.front() == '+') s.erase(0, 1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error(ErrorCode::ParseError, where + ": not a number: '" + text + "'");
  }
  return v;
}

Dataset parse_dataset(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || trim(line)[0] == '#') continue;
    header = split(line, ',');
    break;
  }
  if (header.size() < 2 || lower(header[0]) != "t" || lower(header[1]) != "stimulus") {
    bad_line(source, line_no, "header must start with t,stimulus");
  }
  const bool has_block = header.size() >= 3 && lower(header[2]) == "block";
  const std::size_t first_series = has_block ? 3 : 2;

  struct Row {
    std::size_t t;
    std::string stimulus;
    std::string block;
    std::vector<double> values;
    std::size_t line;
  };
  std::vector<Row> rows;
  const std::size_t series_count = header.size() - first_series;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || trim(line)[0] == '#') continue;
    const auto f = split(line, ',');
    if (f.size() != header.size()) {
      bad_line(source, line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                                    std::to_string(f.size()));
    }
    Row r;
    r.line = line_no;
    const std::string where = source + ":" + std::to_string(line_no);
    r.t = parse_count(f[0], where);
    r.stimulus = f[1];
    if (r.stimulus.empty()) bad_line(source, line_no, "empty stimulus label");
    if (has_block) r.block = f[2];
    r.values.reserve(series_count);
    for (std::size_t c = first_series; c < f.size(); ++c) {
      const double v = parse_double(f[c], where);
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::NonFinite, where + ": non-finite value in series '" + header[c] + "'");
      }
      r.values.push_back(v);
    }
    rows.push_back(std::move(r));
  }
  const std::size_t T = rows.size();
  if (T == 0) throw Error(ErrorCode::DegenerateDesign, source + ": no data rows");
  std::vector<const Row*> ordered(T, nullptr);
  for (const auto& r : rows) {
    if (r.t < 1 || r.t > T) bad_line(source, r.line, "t must lie in 1.." + std::to_string(T));
    if (ordered[r.t - 1]) bad_line(source, r.line, "duplicate t=" + std::to_string(r.t));
    ordered[r.t - 1] = &r;
  }

  std::vector<std::string> stimuli(T), blocks;
  if (has_block) blocks.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    stimuli[t] = ordered[t]->stimulus;
    if (has_block) blocks[t] = ordered[t]->block;
  }
  Dataset data{DesignSchedule::build(stimuli, blocks), {}, {}, {}};
  if (!has_block) {
    data.warnings.push_back(source + ": no block column; treating all rows as one block");
  }
  for (std::size_t c = first_series; c < header.size(); ++c) {
    data.series_ids.push_back(header[c]);
    std::vector<double> values(T);
    for (std::size_t t = 0; t < T; ++t) values[t] = ordered[t]->values[c - first_series];
    data.series.push_back(std::move(values));
  }
  return data;
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  return parse_dataset(in, path);
}

void write_dataset(std::ostream& out, const Dataset& data) {
  const auto& d = data.design;
  out << "t,stimulus";
  if (d.has_blocks()) out << ",block";
  for (const auto& id : data.series_ids) out << ',' << id;
  out << '\n';
  for (std::size_t t = 0; t < d.T(); ++t) {
    out << (t + 1) << ',' << d.stimulus_labels()[d.stimulus(t)];
    if (d.has_blocks()) out << ',' << d.block_labels()[d.block(t)];
    for (const auto& s : data.series) out << ',' << format_double(s[t]);
    out << '\n';
  }
}

void write_dataset(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  write_dataset(out, data);
  if (!out) throw Error(ErrorCode::Io, "write to '" + path + "' failed");
}

Permutation read_permutation_file(const std::string& path, std::size_t T) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  std::vector<std::size_t> mapping;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    const std::size_t v = parse_count(s, path + ":" + std::to_string(line_no));
    if (v < 1) bad_line(path, line_no, "indices are 1-based");
    mapping.push_back(v - 1);
  }
  if (mapping.size() != T) {
    throw Error(ErrorCode::LengthMismatch, path + ": " + std::to_string(mapping.size()) +
                                               " indices for T=" + std::to_string(T));
  }
  return Permutation(std::move(mapping), PermutationFamily::Custom);
}

std::string PermutationSpec::describe() const {
  switch (family) {
    case PermutationFamily::CyclicShift: return "shift:" + std::to_string(shift);
    case PermutationFamily::Custom: return "file:" + path;
    default: return to_string(family);
  }
}

PermutationSpec parse_permutation_spec(const std::string& text) {
  const std::string s = trim(text);
  PermutationSpec spec;
  if (s == "reverse") {
    spec.family = PermutationFamily::Reverse;
  } else if (s == "identity") {
    spec.family = PermutationFamily::Identity;
  } else if (s == "block-random" || s == "block_random") {
    spec.family = PermutationFamily::BlockRandom;
  } else if (s == "odd-even" || s == "odd_even") {
    spec.family = PermutationFamily::OddEven;
  } else if (s.rfind("shift:", 0) == 0) {
    spec.family = PermutationFamily::CyclicShift;
    spec.shift = parse_count(s.substr(6), "permutation '" + s + "'");
  } else if (s.rfind("file:", 0) == 0 && s.size() > 5) {
    spec.family = PermutationFamily::Custom;
    spec.path = s.substr(5);
  } else {
    throw Error(ErrorCode::ParseError,
                "unknown permutation '" + s +
                    "' (reverse, identity, shift:k, block-random, odd-even, file:PATH)");
  }
  return spec;
}

Permutation build_permutation(const PermutationSpec& spec, const DesignSchedule& d,
                              std::uint64_t seed) {
  if (spec.family == PermutationFamily::Custom) return read_permutation_file(spec.path, d.T());
  return make_permutation(spec.family, d, spec.shift, seed);
}

CovarianceModel parse_noise_model(const std::string& text) {
  const std::string s = trim(text);
  const auto colon = s.find(':');
  const std::string name = s.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : s.substr(colon + 1);
  const std::string where = "noise model '" + s + "'";
  CovarianceModel model;
  if (name == "iid" && args.empty()) {
    model = CovarianceModel::iid();
  } else if (name == "exp_nugget") {
    const auto v = parse_list(args, where);
    if (v.size() != 2) throw Error(ErrorCode::ParseError, where + ": expected lambda1,lambda2");
    model = CovarianceModel::exp_nugget(v[0], v[1]);
  } else if (name == "block") {
    const auto v = parse_list(args, where);
    if (v.size() != 2) throw Error(ErrorCode::ParseError, where + ": expected sigma2_b,sigma2_e");
    model = CovarianceModel::block(v[0], v[1]);
  } else if (name == "ar") {
    const auto v = parse_list(args, where);
    if (v.empty()) throw Error(ErrorCode::ParseError, where + ": expected coefficients");
    model = CovarianceModel::autoregressive(v);
  } else {
    throw Error(ErrorCode::ParseError,
                "unknown " + where + " (iid, exp_nugget:l1,l2, block:sb,se, ar:a1,...)");
  }
  model.validate();
  return model;
}

std::vector<EstimatorChoice> parse_estimators(const std::string& text) {
  std::vector<EstimatorChoice> out;
  for (const auto& item : split(text, ',')) {
    if (item == "shuffle") {
      out.push_back(EstimatorChoice::shuffle());
    } else if (item == "shuffle_avg") {
      out.push_back(EstimatorChoice::shuffle_avg());
    } else if (item == "mom") {
      out.push_back(EstimatorChoice::mom());
    } else if (item.rfind("reml:", 0) == 0) {
      out.push_back(EstimatorChoice::reml_fit(parse_reml_family(item.substr(5))));
    } else if (item == "reml") {
      out.push_back(EstimatorChoice::reml_fit({RemlFamily::ExpNugget, 3}));
    } else {
      throw Error(ErrorCode::ParseError, "unknown estimator '" + item +
                                             "' (shuffle, shuffle_avg, mom, reml:FAMILY)");
    }
  }
  if (out.empty()) throw Error(ErrorCode::ParseError, "no estimators given");
  return out;
}

ConfigSections parse_config(std::istream& in, const std::string& source) {
  ConfigSections out;
  std::string section;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') bad_line(source, line_no, "unterminated section header");
      section = trim(s.substr(1, s.size() - 2));
      out[section];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) bad_line(source, line_no, "expected key=value");
    const auto key = trim(s.substr(0, eq));
    if (key.empty()) bad_line(source, line_no, "empty key");
    out[section][key] = trim(s.substr(eq + 1));
  }
  return out;
}

ConfigSections read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  return parse_config(in, path);
}

SweepConfig sweep_preset(const std::string& name) {
  if (name == "fig5a") return SweepConfig::fig5a();
  if (name == "fig5b") return SweepConfig::fig5b();
  if (name == "fig6") {
    auto c = SweepConfig::fig6();
    c.replicates = 200;
    return c;
  }
  throw Error(ErrorCode::ParseError, "unknown preset '" + name + "' (fig5a, fig5b, fig6)");
}

SweepConfig apply_sweep_settings(SweepConfig cfg, const std::map<std::string, std::string>& kv) {
  if (auto it = kv.find("preset"); it != kv.end()) cfg = sweep_preset(it->second);
  for (const auto& [key, value] : kv) {
    const std::string where = "setting '" + key + "'";
    if (key == "preset") {
      continue;
    } else if (key == "kind") {
      if (value == "block") cfg.kind = SweepKind::Block;
      else if (value == "timeseries") cfg.kind = SweepKind::TimeSeries;
      else if (value == "reml_comparison") cfg.kind = SweepKind::RemlComparison;
      else throw Error(ErrorCode::ParseError, where + ": block, timeseries or reml_comparison");
    } else if (key == "m") {
      cfg.m = parse_count(value, where);
    } else if (key == "n") {
      cfg.n = parse_count(value, where);
    } else if (key == "blocks") {
      cfg.blocks = parse_count(value, where);
    } else if (key == "noise") {
      cfg.noise = parse_noise_model(value);
    } else if (key == "sigma2_eps") {
      cfg.sigma2_eps = parse_double(value, where);
    } else if (key == "grid") {
      cfg.grid = value.empty() ? std::vector<double>{} : parse_list(value, where);
    } else if (key == "replicates") {
      cfg.replicates = parse_count(value, where);
    } else if (key == "permutation") {
      const auto spec = parse_permutation_spec(value);
      if (spec.family == PermutationFamily::Custom) {
        throw Error(ErrorCode::ParseError, where + ": sweeps build their own design, no files");
      }
      cfg.permutation = spec.family;
      cfg.shift = spec.shift;
    } else if (key == "seed") {
      cfg.seed = parse_count(value, where);
    } else if (key == "estimators") {
      cfg.estimators = parse_estimators(value);
    } else if (key == "threads") {
      cfg.threads = static_cast<unsigned>(parse_count(value, where));
    } else if (key == "reml_starts") {
      cfg.reml.starts = parse_count(value, where);
    } else if (key == "output") {
      continue;  // consumed by the caller
    } else {
      throw Error(ErrorCode::ParseError, "unknown " + where);
    }
  }
  return cfg;
}

namespace {

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::vector<std::string> describe_sweep(const SweepConfig& cfg) {
  std::vector<std::string> out;
  out.push_back("kind=" + to_string(cfg.kind));
  out.push_back("m=" + std::to_string(cfg.m));
  out.push_back("n=" + std::to_string(cfg.n));
  if (cfg.kind == SweepKind::Block) out.push_back("blocks=" + std::to_string(cfg.blocks));
  out.push_back("noise=" + cfg.noise.describe());
  out.push_back("sigma2_eps=" + shortest(cfg.sigma2_eps));
  std::string grid;
  for (double g : cfg.grid) grid += (grid.empty() ? "" : ",") + shortest(g);
  out.push_back("grid=" + grid);
  out.push_back("replicates=" + std::to_string(cfg.replicates));
  PermutationSpec p{cfg.permutation, cfg.shift, {}};
  out.push_back("permutation=" + p.describe());
  out.push_back("seed=" + std::to_string(cfg.seed));
  std::string est;
  for (const auto& e : cfg.estimators) est += (est.empty() ? "" : ",") + e.name();
  out.push_back("estimators=" + est);
  out.push_back("reml_starts=" + std::to_string(cfg.reml.starts));
  return out;
}

std::vector<EstimateRow> estimate_dataset(const Dataset& data, const EstimateRequest& request) {
  const auto& d = data.design;
  std::vector<Permutation> perms;
  std::vector<double> alphas;
  for (const auto& spec : request.permutations) {
    perms.push_back(build_permutation(spec, d, request.seed));
    alphas.push_back(alpha(d, perms.back()));
  }
  const std::size_t E = request.estimators.size();
  std::vector<EstimateRow> rows(data.series.size() * E);
  parallel_for(data.series.size(), request.threads, [&](std::size_t s) {
    for (std::size_t e = 0; e < E; ++e) {
      const auto& choice = request.estimators[e];
      EstimateRow& row = rows[s * E + e];
      row.series_id = data.series_ids[s];
      try {
        row.estimate = run_estimator(choice, data.series[s], d, perms, alphas, request.reml);
      } catch (const Error& err) {
        row.error = err.what();
        auto& est = row.estimate;
        est = VarianceEstimate{};
        est.method = choice.name();
        est.sigma2_A_raw = est.sigma2_A = est.noise_level = est.omega2 = kNaN;
        est.total = ms_between(data.series[s], d);
        if (!alphas.empty() && choice.kind != EstimatorChoice::Kind::Mom &&
            choice.kind != EstimatorChoice::Kind::Reml) {
          est.alpha = alphas[0];
        }
        est.flags.trivial_permutation = err.code() == ErrorCode::TrivialPermutation;
        est.flags.non_converged = err.code() == ErrorCode::AllStartsFailed;
      }
    }
  });
  return rows;
}

void write_estimates(std::ostream& out, const std::vector<EstimateRow>& rows,
                     const std::vector<std::string>& header_lines) {
  for (const auto& h : header_lines) out << "# " << h << '\n';
  out << "series_id,method,alpha,sigma2_A_raw,sigma2_A,noise_level,ms_between,omega2,flags\n";
  for (const auto& r : rows) {
    const auto& e = r.estimate;
    std::string flags = e.flags.to_string();
    if (!r.error.empty() && flags.empty()) flags = "error";
    out << r.series_id << ',' << e.method << ',' << (e.alpha ? format_double(*e.alpha) : "NA")
        << ',' << format_double(e.sigma2_A_raw) << ',' << format_double(e.sigma2_A) << ','
        << format_double(e.noise_level) << ',' << format_double(e.total) << ','
        << format_double(e.omega2) << ',' << flags << '\n';
  }
}

}  // namespace shufflevar
