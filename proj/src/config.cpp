// SPDX-License-Identifier: Apache-2.0

#include "rotalab/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>

#include "rotalab/csv.hpp"
#include "rotalab/error.hpp"

namespace rotalab {

std::string_view to_string(ProblemKind k) noexcept {
  return k == ProblemKind::quadratic ? "quadratic" : "mlp";
}

std::string_view to_string(EquivarianceKind k) noexcept {
  switch (k) {
    case EquivarianceKind::dense:
      return "dense";
    case EquivarianceKind::identity:
      return "identity";
    case EquivarianceKind::signed_permutation:
      return "signed_permutation";
    case EquivarianceKind::planar:
      return "planar";
  }
  return "dense";
}

namespace {

struct Entry {
  std::string key;
  std::string value;
  std::size_t line = 0;
  std::size_t key_column = 0;
  std::size_t value_column = 0;
  bool used = false;
};

struct Section {
  std::string name;
  std::size_t line = 0;
  std::vector<Entry> entries;
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t column_of(std::string_view line, std::string_view part) {
  return static_cast<std::size_t>(part.data() - line.data()) + 1;
}

bool valid_identifier(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '_' || c == '-';
  });
}

std::vector<Section> tokenize(std::string_view text) {
  std::vector<Section> sections;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    std::string_view body = line;
    if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    const std::string_view t = trim(body);
    if (t.empty()) continue;

    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError("unterminated section header", line_no, column_of(line, t));
      const std::string_view name = trim(t.substr(1, t.size() - 2));
      if (!valid_identifier(name))
        throw ConfigError("invalid section name", line_no, column_of(line, t) + 1);
      for (const auto& s : sections)
        if (s.name == name)
          throw ConfigError("duplicate section [" + std::string(name) + "]", line_no,
                            column_of(line, t));
      sections.push_back({std::string(name), line_no, {}});
      continue;
    }

    const auto eq = t.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("expected 'key = value'", line_no, column_of(line, t));
    if (sections.empty())
      throw ConfigError("key outside of any section", line_no, column_of(line, t));
    const std::string_view key = trim(t.substr(0, eq));
    const std::string_view value = trim(t.substr(eq + 1));
    if (!valid_identifier(key))
      throw ConfigError("invalid key", line_no, column_of(line, t));
    if (value.empty())
      throw ConfigError("missing value for '" + std::string(key) + "'", line_no,
                        column_of(line, t) + eq + 1);
    Section& sec = sections.back();
    for (const auto& e : sec.entries)
      if (e.key == key)
        throw ConfigError("duplicate key '" + std::string(key) + "' in [" + sec.name + "]",
                          line_no, column_of(line, key));
    sec.entries.push_back({std::string(key), std::string(value), line_no, column_of(line, key),
                           column_of(line, value), false});
  }
  return sections;
}

class Reader {
 public:
  explicit Reader(Section* section) : s_(section) {}

  bool present() const { return s_ != nullptr; }

  const Entry* find(std::string_view key) {
    if (!s_) return nullptr;
    for (auto& e : s_->entries)
      if (e.key == key) {
        e.used = true;
        return &e;
      }
    return nullptr;
  }

  const Entry& required(std::string_view key) {
    const Entry* e = find(key);
    if (!e)
      throw ConfigError("missing required key '" + std::string(key) + "' in [" + name() + "]",
                        s_ ? s_->line : 0, 1);
    return *e;
  }

  void finish() const {
    if (!s_) return;
    for (const auto& e : s_->entries)
      if (!e.used)
        throw ConfigError("unknown key '" + e.key + "' in [" + s_->name + "]", e.line,
                          e.key_column);
  }

  std::string name() const { return s_ ? s_->name : std::string(); }

 private:
  Section* s_;
};

[[noreturn]] void bad_value(const Entry& e, const std::string& what) {
  throw ConfigError("invalid value for '" + e.key + "': " + what, e.line, e.value_column);
}

double to_double(const Entry& e, std::string_view s) {
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(x))
    bad_value(e, "expected a number, got '" + std::string(s) + "'");
  return x;
}

std::uint64_t to_u64(const Entry& e, std::string_view s) {
  std::uint64_t x = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size())
    bad_value(e, "expected a non-negative integer, got '" + std::string(s) + "'");
  return x;
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto c = s.find(',', pos);
    out.push_back(trim(s.substr(pos, c == std::string_view::npos ? std::string_view::npos : c - pos)));
    if (c == std::string_view::npos) break;
    pos = c + 1;
  }
  return out;
}

template <class T, class F>
std::vector<T> to_list(const Entry& e, F&& one) {
  std::vector<T> out;
  for (auto item : split_list(e.value)) {
    if (item.empty()) bad_value(e, "empty list element");
    out.push_back(one(e, item));
  }
  return out;
}

bool to_bool(const Entry& e) {
  if (e.value == "true" || e.value == "yes" || e.value == "1") return true;
  if (e.value == "false" || e.value == "no" || e.value == "0") return false;
  bad_value(e, "expected true or false");
}

template <class Enum>
Enum choose(const Entry& e, std::initializer_list<std::pair<const char*, Enum>> options) {
  std::string expected;
  for (const auto& [name, value] : options) {
    if (e.value == name) return value;
    if (!expected.empty()) expected += '|';
    expected += name;
  }
  bad_value(e, "expected " + expected);
}

// Converts library validation errors into ConfigErrors pointing at `e`.
template <class F>
auto at(const Entry& e, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& err) {
    bad_value(e, err.what());
  }
}

void set_double(Reader& r, std::string_view key, double& out) {
  if (const Entry* e = r.find(key)) out = to_double(*e, e->value);
}
void set_size(Reader& r, std::string_view key, std::size_t& out) {
  if (const Entry* e = r.find(key)) out = static_cast<std::size_t>(to_u64(*e, e->value));
}
void set_u64(Reader& r, std::string_view key, std::uint64_t& out) {
  if (const Entry* e = r.find(key)) out = to_u64(*e, e->value);
}
void set_bool(Reader& r, std::string_view key, bool& out) {
  if (const Entry* e = r.find(key)) out = to_bool(*e);
}

void read_problem(Reader r, ProblemConfig& p) {
  const Entry& kind = r.required("kind");
  p.kind = choose(kind, {std::pair{"quadratic", ProblemKind::quadratic},
                         std::pair{"mlp", ProblemKind::mlp}});
  if (const Entry* e = r.find("seed")) p.seed = to_u64(*e, e->value);

  if (p.kind == ProblemKind::quadratic) {
    QuadraticSpec& q = p.quadratic;
    const Entry& dim = r.required("dim");
    q.dim = static_cast<std::size_t>(to_u64(dim, dim.value));
    if (q.dim == 0) bad_value(dim, "dim must be >= 1");
    if (const Entry* e = r.find("eigenvalues")) q.eigenvalues = to_list<double>(*e, to_double);
    set_double(r, "eig_min", q.eig_min);
    set_double(r, "eig_max", q.eig_max);
    if (const Entry* e = r.find("spacing"))
      q.spacing = choose(*e, {std::pair{"geometric", Spacing::geometric},
                              std::pair{"random", Spacing::random}});
    if (const Entry* e = r.find("basis"))
      q.basis = choose(*e, {std::pair{"axis_aligned", QuadraticBasis::axis_aligned},
                            std::pair{"rotated", QuadraticBasis::rotated}});
    set_u64(r, "basis_seed", q.basis_seed);
    set_double(r, "sigma", q.sigma);
    if (const Entry* e = r.find("init"))
      q.init = choose(*e, {std::pair{"ones", InitKind::ones}, std::pair{"gaussian", InitKind::gaussian}});
    set_double(r, "init_scale", q.init_scale);
    if (const Entry* e = r.find("minimizer")) q.minimizer = to_list<double>(*e, to_double);
    if (const Entry* e = r.find("layout")) {
      q.layout = at(*e, [&] { return ParamLayout::parse(e->value); });
      if (q.layout->dim() != q.dim) bad_value(*e, "layout dimension does not match dim");
    }
    if (q.sigma < 0.0) bad_value(*r.find("sigma"), "sigma must be >= 0");
    if (!q.eigenvalues.empty() && q.eigenvalues.size() != q.dim)
      bad_value(*r.find("eigenvalues"), "expected dim entries");
  } else {
    MlpSpec& m = p.mlp;
    if (const Entry* e = r.find("widths")) {
      m.widths.clear();
      for (auto x : to_list<std::uint64_t>(*e, to_u64)) m.widths.push_back(static_cast<std::size_t>(x));
      if (m.widths.size() < 2 ||
          std::any_of(m.widths.begin(), m.widths.end(), [](std::size_t w) { return w == 0; }))
        bad_value(*e, "need at least two positive widths");
    }
    if (const Entry* e = r.find("activation"))
      m.activation = choose(*e, {std::pair{"tanh", Activation::tanh}, std::pair{"relu", Activation::relu}});
    if (const Entry* e = r.find("task"))
      m.task = choose(*e, {std::pair{"regression", MlpTask::regression},
                           std::pair{"classification", MlpTask::classification}});
    set_size(r, "dataset_size", m.dataset_size);
    set_size(r, "batch_size", m.batch_size);
    set_size(r, "active_features", m.active_features);
    set_double(r, "teacher_scale", m.teacher_scale);
    set_double(r, "init_scale", m.init_scale);
  }
  r.finish();
}

void read_optimizer(Reader r, ExperimentConfig& c) {
  const Entry& base = r.required("base");
  c.base = at(base, [&] { return parse_base(base.value); });
  OptimizerConfig& o = c.optimizer;
  set_double(r, "alpha", o.alpha);
  set_double(r, "beta1", o.beta1);
  set_double(r, "beta2", o.beta2);
  set_double(r, "epsilon", o.epsilon);
  set_double(r, "weight_decay", o.lambda);
  set_double(r, "momentum", o.momentum);
  set_double(r, "clip_norm", o.clip_norm);
  set_size(r, "warmup_steps", o.warmup_steps);
  set_double(r, "min_alpha", o.min_alpha);
  if (const Entry* e = r.find("schedule"))
    o.schedule = choose(*e, {std::pair{"constant", Schedule::constant},
                             std::pair{"cosine", Schedule::cosine}});
  at(base, [&] {
    o.validate();
    return 0;
  });
  r.finish();
}

void read_rotation(Reader r, RotationConfig& rc) {
  if (const Entry* e = r.find("scopes")) {
    rc.scopes = to_list<RotationScope>(
        *e, [](const Entry& en, std::string_view s) { return at(en, [&] { return parse_scope(s); }); });
    for (std::size_t a = 0; a < rc.scopes.size(); ++a)
      for (std::size_t b = a + 1; b < rc.scopes.size(); ++b)
        if (rc.scopes[a] == rc.scopes[b]) bad_value(*e, "duplicate scope");
  }
  RotationSpec& s = rc.spec;
  if (const Entry* e = r.find("block_dim")) {
    s.block_dim = static_cast<std::size_t>(to_u64(*e, e->value));
    if (s.block_dim == 0) bad_value(*e, "block_dim must be >= 1");
  }
  set_bool(r, "shared_blocks", s.shared_blocks);
  if (const Entry* e = r.find("refresh_interval")) {
    s.refresh_interval = static_cast<std::size_t>(to_u64(*e, e->value));
    if (s.refresh_interval == 0) bad_value(*e, "refresh_interval must be >= 1");
  }
  if (const Entry* e = r.find("layer_mask")) {
    std::vector<std::string> names;
    for (auto n : split_list(e->value)) {
      if (n.empty()) bad_value(*e, "empty list element");
      names.emplace_back(n);
    }
    s.layer_mask = std::move(names);
  }
  set_bool(r, "omit_permutation_undo", s.omit_permutation_undo);
  set_bool(r, "reproject_moments", rc.reproject_moments);
  r.finish();
}

void read_run(Reader r, RunConfig& run) {
  if (const Entry* e = r.find("name")) {
    if (!valid_identifier(e->value)) bad_value(*e, "names may use letters, digits, '-' and '_'");
    run.name = e->value;
  }
  if (const Entry* e = r.find("mode"))
    run.mode = choose(*e, {std::pair{"train", RunMode::train}, std::pair{"fig2", RunMode::fig2}});
  if (run.mode == RunMode::fig2) {
    set_size(r, "steps", run.steps);
  } else {
    const Entry& steps = r.required("steps");
    run.steps = static_cast<std::size_t>(to_u64(steps, steps.value));
  }
  const Entry& seeds = r.required("seeds");
  run.seeds = to_list<std::uint64_t>(seeds, to_u64);
  for (std::size_t a = 0; a < run.seeds.size(); ++a)
    for (std::size_t b = a + 1; b < run.seeds.size(); ++b)
      if (run.seeds[a] == run.seeds[b]) bad_value(seeds, "duplicate seed");
  set_size(r, "snapshot_every", run.snapshot_every);
  if (const Entry* e = r.find("output")) {
    const std::filesystem::path p(e->value);
    if (p.is_absolute() || e->value.find("..") != std::string::npos)
      bad_value(*e, "output must be a relative path below the output root");
    run.output = e->value;
  }
  set_bool(r, "diagnose", run.diagnose);
  r.finish();
}

void read_equivariance(Reader r, EquivarianceConfig& eq) {
  if (const Entry* e = r.find("algs"))
    eq.algs = to_list<BaseOptimizer>(
        *e, [](const Entry& en, std::string_view s) { return at(en, [&] { return parse_base(s); }); });
  if (const Entry* e = r.find("kind"))
    eq.kind = choose(*e, {std::pair{"dense", EquivarianceKind::dense},
                          std::pair{"identity", EquivarianceKind::identity},
                          std::pair{"signed_permutation", EquivarianceKind::signed_permutation},
                          std::pair{"planar", EquivarianceKind::planar}});
  if (const Entry* e = r.find("rotations")) {
    eq.rotations = static_cast<std::size_t>(to_u64(*e, e->value));
    if (eq.rotations == 0) bad_value(*e, "rotations must be >= 1");
  }
  set_size(r, "steps", eq.steps);
  set_double(r, "angle_deg", eq.angle_deg);
  set_u64(r, "seed", eq.seed);
  set_double(r, "tolerance", eq.tolerance);
  r.finish();
}

void read_diagnostics(Reader r, DiagnosticsConfig& dc) {
  auto positive = [&](std::string_view key, std::size_t& out) {
    if (const Entry* e = r.find(key)) {
      out = static_cast<std::size_t>(to_u64(*e, e->value));
      if (out == 0) bad_value(*e, "must be >= 1");
    }
  };
  positive("trials", dc.trials);
  positive("rows", dc.rows);
  positive("k", dc.k);
  positive("bins", dc.bins);
  set_u64(r, "seed", dc.seed);
  set_bool(r, "stratified", dc.stratified);
  if (const Entry* e = r.find("probes")) {
    dc.probes.clear();
    for (auto p : split_list(e->value)) {
      if (p != "checkpoint") at(*e, [&] { return parse_scope(p); });
      dc.probes.emplace_back(p);
    }
  }
  r.finish();
}

void read_fig2(Reader r, Fig2Config& f) {
  set_double(r, "angle_deg", f.angle_deg);
  set_size(r, "steps", f.steps);
  set_double(r, "sgd_alpha", f.sgd_alpha);
  set_double(r, "sgd_momentum", f.sgd_momentum);
  set_double(r, "adam_alpha", f.adam_alpha);
  if (const Entry* e = r.find("start")) {
    f.start = to_list<double>(*e, to_double);
    if (f.start.size() != 2) bad_value(*e, "expected two coordinates");
  }
  r.finish();
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  std::vector<Section> sections = tokenize(text);
  static const std::vector<std::string> known{"problem",     "optimizer",   "rotation", "run",
                                              "equivariance", "diagnostics", "fig2"};
  for (const auto& s : sections)
    if (std::find(known.begin(), known.end(), s.name) == known.end())
      throw ConfigError("unknown section [" + s.name + "]", s.line, 1);

  auto section = [&](std::string_view name) -> Section* {
    for (auto& s : sections)
      if (s.name == name) return &s;
    return nullptr;
  };
  auto required = [&](std::string_view name) -> Section* {
    Section* s = section(name);
    if (!s) throw ConfigError("missing required section [" + std::string(name) + "]");
    return s;
  };

  ExperimentConfig c;
  c.source = std::string(text);
  read_problem(Reader(required("problem")), c.problem);
  read_optimizer(Reader(required("optimizer")), c);
  read_rotation(Reader(section("rotation")), c.rotation);
  read_run(Reader(required("run")), c.run);
  read_equivariance(Reader(section("equivariance")), c.equivariance);
  read_diagnostics(Reader(section("diagnostics")), c.diagnostics);
  read_fig2(Reader(section("fig2")), c.fig2);
  if (c.equivariance.algs.empty()) c.equivariance.algs = {c.base};

  if (c.run.mode == RunMode::fig2 &&
      (c.problem.kind != ProblemKind::quadratic || c.problem.quadratic.dim != 2))
    throw ConfigError("mode = fig2 needs a two-dimensional quadratic problem");
  if (c.run.mode == RunMode::train && c.run.seeds.empty())
    throw ConfigError("[run] seeds must not be empty");
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  return parse_config(text);
}

}  // namespace rotalab
