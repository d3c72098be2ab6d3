// SPDX-License-Identifier: Apache-2.0
#include "fusion/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>

namespace fusion {

namespace {

// Reads one JSON object, remembering which keys were consumed so leftovers can be
// rejected with their full path.
class Section {
 public:
  Section(const Json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json* find(const std::string& key) {
    seen_.insert(key);
    auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const Json* v = find(key)) out = as_number(*v, key_path(key));
  }

  void integer(const std::string& key, long& out, long min) {
    if (const Json* v = find(key)) out = as_integer(*v, key_path(key), min);
  }

  template <class U>
  void unsigned_integer(const std::string& key, U& out, long min) {
    if (const Json* v = find(key)) out = static_cast<U>(as_integer(*v, key_path(key), min));
  }

  void boolean(const std::string& key, bool& out) {
    if (const Json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(key_path(key), "expected a boolean");
      out = v->get<bool>();
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const Json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(key_path(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (const Json* v = find(key)) out = as_numbers(*v, key_path(key));
  }

  std::optional<Section> child(const std::string& key) {
    if (const Json* v = find(key)) return Section(*v, key_path(key));
    return std::nullopt;
  }

  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(key_path(it.key()), "unknown key");
    }
  }

  static double as_number(const Json& v, const std::string& path) {
    if (v.is_string()) {
      const std::string s = v.get<std::string>();
      if (s == "inf") return std::numeric_limits<double>::infinity();
      throw ConfigError(path, "expected a number (or \"inf\")");
    }
    if (!v.is_number()) throw ConfigError(path, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(path, "must be finite");
    return x;
  }

  static long as_integer(const Json& v, const std::string& path, long min) {
    if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
    const long x = v.get<long>();
    if (x < min) throw ConfigError(path, "must be >= " + std::to_string(min));
    return x;
  }

  static Vec as_numbers(const Json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
    Vec out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
  }

 private:
  const Json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

std::vector<std::size_t> as_widths(const Json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) throw ConfigError(path, "expected a nonempty array of layer widths");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(static_cast<std::size_t>(Section::as_integer(v[i], path + "[" + std::to_string(i) + "]", 1)));
  }
  return out;
}

void parse_world(Section s, WorldSpec& w) {
  s.string("preset", w.preset);
  if (w.preset != "custom") {
    s.finish();
    if (w.preset != "conflicting" && w.preset != "independent" && w.preset != "overlapping") {
      throw ConfigError(s.key_path("preset"), "unknown preset '" + w.preset + "'");
    }
    return;
  }
  long dim = 0;
  s.integer("dim", dim, 1);
  w.dim = static_cast<std::size_t>(dim);
  s.number("variance", w.variance);
  if (const Json* v = s.find("identity_means")) {
    if (!v->is_array()) throw ConfigError(s.key_path("identity_means"), "expected an array of vectors");
    for (std::size_t i = 0; i < v->size(); ++i) {
      w.identity_means.push_back(Section::as_numbers((*v)[i], s.key_path("identity_means") + "[" + std::to_string(i) + "]"));
    }
  }
  if (const Json* v = s.find("styles")) {
    if (!v->is_array()) throw ConfigError(s.key_path("styles"), "expected an array of style maps");
    for (std::size_t i = 0; i < v->size(); ++i) {
      Section st((*v)[i], s.key_path("styles") + "[" + std::to_string(i) + "]");
      StyleMap m;
      st.numbers("A", m.A);
      st.numbers("b", m.b);
      st.finish();
      w.styles.push_back(std::move(m));
    }
  }
  s.finish();
  try {
    (void)w.build();
  } catch (const Error& e) {
    throw ConfigError(s.key_path("preset"), std::string("invalid custom world: ") + e.what());
  }
}

void parse_schedule(Section s, ScheduleSpec& sch, SigmaProfile& sigma) {
  long T = sch.T;
  s.integer("T", T, 1);
  sch.T = static_cast<int>(T);
  s.number("beta_start", sch.beta_start);
  s.number("beta_end", sch.beta_end);
  std::string kind = to_string(sigma.kind);
  s.string("sigma", kind);
  try {
    sigma.kind = sigma_kind_from_string(kind);
  } catch (const Error& e) {
    throw ConfigError(s.key_path("sigma"), e.what());
  }
  s.number("eta", sigma.eta);
  s.numbers("sigma_values", sigma.values);
  s.finish();
  if (!(sigma.eta >= 0.0 && sigma.eta <= 1.0)) throw ConfigError(s.key_path("eta"), "must lie in [0, 1]");
  if (sigma.kind == SigmaKind::custom && sigma.values.size() != static_cast<std::size_t>(sch.T)) {
    throw ConfigError(s.key_path("sigma_values"), "custom sigma needs exactly T values");
  }
  try {
    validate_profile(DiffusionSchedule::linear(sch.T, sch.beta_start, sch.beta_end), sigma);
  } catch (const Error& e) {
    throw ConfigError(s.key_path("sigma"), e.what());
  }
}

void parse_guidance(Section s, GuidanceWeights& w) {
  s.number("omega", w.omega);
  s.number("omega1", w.omega1);
  s.number("omega2", w.omega2);
  s.numbers("omega_list", w.omega_list);
  s.number("omega_C", w.omega_C);
  s.finish();
}

void parse_fusion(Section s, FusionConfig& f) {
  std::string mode = to_string(f.mode);
  s.string("mode", mode);
  std::string update = to_string(f.update);
  s.string("update", update);
  try {
    f.mode = sampler_mode_from_string(mode);
  } catch (const Error& e) {
    throw ConfigError(s.key_path("mode"), e.what());
  }
  try {
    f.update = fusion_update_from_string(update);
  } catch (const Error& e) {
    throw ConfigError(s.key_path("update"), e.what());
  }
  long m = f.m;
  s.integer("m", m, 0);
  f.m = static_cast<int>(m);
  s.number("gamma", f.gamma);
  s.boolean("use_refinement", f.use_refinement);
  s.finish();
  if (!(f.gamma >= 0.0 && f.gamma <= 1.0)) throw ConfigError(s.key_path("gamma"), "must lie in [0, 1]");
}

void parse_conditions(Section s, ConditionSpec& c) {
  s.unsigned_integer("target_identity", c.target_identity, 0);
  s.unsigned_integer("reference_style", c.reference_style, 0);
  s.unsigned_integer("target_style", c.target_style, 0);
  s.number("identity_strength", c.identity_strength);
  s.number("leak_strength", c.leak_strength);
  s.number("text_strength", c.text_strength);
  if (const Json* v = s.find("extra_identities")) {
    if (!v->is_array()) throw ConfigError(s.key_path("extra_identities"), "expected an array of identity indices");
    for (std::size_t i = 0; i < v->size(); ++i) {
      c.extra_identities.push_back(static_cast<std::size_t>(
          Section::as_integer((*v)[i], s.key_path("extra_identities") + "[" + std::to_string(i) + "]", 0)));
    }
  }
  s.finish();
  for (const auto& [key, v] : {std::pair{"identity_strength", c.identity_strength},
                               std::pair{"leak_strength", c.leak_strength},
                               std::pair{"text_strength", c.text_strength}}) {
    if (!(v >= 0.0)) throw ConfigError(s.key_path(key), "must be >= 0");
  }
}

void parse_sampling(Section s, SamplingSpec& sp) {
  std::string predictor = to_string(sp.predictor);
  s.string("predictor", predictor);
  if (predictor == "oracle") {
    sp.predictor = PredictorKind::oracle;
  } else if (predictor == "denoiser") {
    sp.predictor = PredictorKind::denoiser;
  } else {
    throw ConfigError(s.key_path("predictor"), "expected \"oracle\" or \"denoiser\"");
  }
  s.unsigned_integer("samples", sp.samples, 1);
  s.unsigned_integer("repeats", sp.repeats, 1);
  s.unsigned_integer("workers", sp.workers, 1);
  s.boolean("keep_trajectories", sp.keep_trajectories);
  s.boolean("svg", sp.svg);
  s.finish();
}

void parse_training(Section s, TrainingSpec& t) {
  s.integer("denoiser_steps", t.denoiser_steps, 1);
  if (const Json* v = s.find("denoiser_hidden")) t.denoiser.hidden = as_widths(*v, s.key_path("denoiser_hidden"));
  s.unsigned_integer("denoiser_batch", t.denoiser.batch, 1);
  s.number("denoiser_learning_rate", t.denoiser.learning_rate);
  s.integer("encoder_steps", t.encoder.steps, 0);
  s.unsigned_integer("encoder_batch", t.encoder.batch, 1);
  s.number("encoder_learning_rate", t.encoder.learning_rate);
  if (const Json* v = s.find("encoder_hidden")) t.encoder.hidden = as_widths(*v, s.key_path("encoder_hidden"));
  s.number("lambda", t.encoder.lambda);
  s.boolean("augment", t.encoder.augment);
  s.boolean("free_embedding", t.encoder.free_embedding);
  s.integer("finetune_steps", t.finetune_steps, 0);
  s.unsigned_integer("finetune_batch", t.finetune_batch, 1);
  s.number("finetune_learning_rate", t.finetune_learning_rate);
  s.unsigned_integer("eval_draws", t.eval_draws, 1);
  s.unsigned_integer("eval_samples", t.eval_samples, 1);
  s.number("eval_omega", t.eval_omega);
  s.finish();
  if (!(t.encoder.lambda >= 0.0)) throw ConfigError(s.key_path("lambda"), "must be >= 0");
  for (const auto& [key, v] : {std::pair{"denoiser_learning_rate", t.denoiser.learning_rate},
                               std::pair{"encoder_learning_rate", t.encoder.learning_rate},
                               std::pair{"finetune_learning_rate", t.finetune_learning_rate}}) {
    if (!(v > 0.0)) throw ConfigError(s.key_path(key), "must be > 0");
  }
}

void parse_sweep(Section s, SweepSpec& sw) {
  s.numbers("lambdas", sw.lambdas);
  s.unsigned_integer("repeats", sw.repeats, 1);
  s.unsigned_integer("samples", sw.samples, 1);
  s.number("omega", sw.omega);
  s.finish();
  if (sw.lambdas.empty()) throw ConfigError(s.key_path("lambdas"), "must not be empty");
  for (std::size_t i = 0; i < sw.lambdas.size(); ++i) {
    if (!(sw.lambdas[i] >= 0.0) || std::isinf(sw.lambdas[i])) {
      throw ConfigError(s.key_path("lambdas") + "[" + std::to_string(i) + "]", "must be finite and >= 0");
    }
  }
}

Json number_json(double v) {
  if (std::isinf(v)) return "inf";
  return v;
}

}  // namespace

MixtureWorld WorldSpec::build() const {
  if (preset == "conflicting") return MixtureWorld::conflicting();
  if (preset == "independent") return MixtureWorld::independent();
  if (preset == "overlapping") return MixtureWorld::overlapping();
  if (preset == "custom") return MixtureWorld(dim, variance, identity_means, styles);
  throw InvalidArgument("unknown world preset '" + preset + "'");
}

FusionConfig RunConfig::default_fusion() {
  FusionConfig f;
  f.gamma = 0.05;
  f.weights = AblationSetup::default_weights();
  return f;
}

DiffusionSchedule RunConfig::build_schedule() const {
  return DiffusionSchedule::linear(schedule.T, schedule.beta_start, schedule.beta_end);
}

std::vector<std::uint64_t> RunConfig::repeat_seeds(std::size_t repeats) const {
  std::vector<std::uint64_t> out;
  for (std::size_t r = 0; r < repeats; ++r) out.push_back(seed + r);
  return out;
}

ConditionSet RunConfig::oracle_conditions(const MixtureWorld& world) const {
  const ConditionSpec& c = conditions;
  ConditionSet cond = ConditionSet::joint(
      identity_log_weights(world, c.target_identity, c.identity_strength, c.reference_style, c.leak_strength),
      style_log_weights(world, c.target_style, c.text_strength));
  for (std::size_t i : c.extra_identities) {
    cond.extra_identities.push_back(
        identity_log_weights(world, i, c.identity_strength, c.reference_style, c.leak_strength));
  }
  return cond;
}

ConditionSet RunConfig::embedded_conditions(const MixtureWorld& world) const {
  const ConditionSpec& c = conditions;
  const std::optional<std::size_t> leak =
      c.leak_strength > 0.0 ? std::optional<std::size_t>(c.reference_style) : std::nullopt;
  ConditionSet cond = ConditionSet::joint(identity_embedding(world, c.target_identity, leak),
                                          text_embedding(world, c.target_style));
  for (std::size_t i : c.extra_identities) cond.extra_identities.push_back(identity_embedding(world, i, leak));
  return cond;
}

AblationSetup RunConfig::ablation_setup() const {
  AblationSetup s;
  s.world = world.build();
  s.schedule = build_schedule();
  s.target_identity = conditions.target_identity;
  s.reference_style = conditions.reference_style;
  s.target_style = conditions.target_style;
  s.identity_strength = conditions.identity_strength;
  s.leak_strength = conditions.leak_strength;
  s.text_strength = conditions.text_strength;
  s.gamma = fusion.gamma;
  s.m = fusion.m;
  s.weights = fusion.weights;
  s.sigma = fusion.sigma;
  s.update = fusion.update;
  s.seeds = repeat_seeds(sampling.repeats);
  s.samples = sampling.samples;
  s.workers = sampling.workers;
  return s;
}

SweepSetup RunConfig::sweep_setup() const {
  SweepSetup s;
  s.world = world.build();
  s.schedule = build_schedule();
  s.lambdas = sweep.lambdas;
  s.seeds = repeat_seeds(sweep.repeats);
  s.denoiser_steps = training.denoiser_steps;
  s.denoiser_seed = seed;
  s.denoiser_options = training.denoiser;
  s.training = training.encoder;
  s.target_identity = conditions.target_identity;
  s.reference_style = conditions.reference_style;
  s.target_style = conditions.target_style;
  s.omega = sweep.omega;
  s.sigma = fusion.sigma;
  s.samples = sweep.samples;
  s.eval_draws = training.eval_draws;
  s.workers = sampling.workers;
  return s;
}

RunConfig parse_config(const Json& doc) {
  RunConfig c;
  Section root(doc, "");
  if (const Json* v = root.find("seed")) c.seed = static_cast<std::uint64_t>(Section::as_integer(*v, "seed", 0));
  if (const Json* v = root.find("output_dir")) {
    if (!v->is_string()) throw ConfigError("output_dir", "expected a string");
    c.output_dir = v->get<std::string>();
  }
  if (auto s = root.child("world")) parse_world(*s, c.world);
  if (auto s = root.child("schedule")) parse_schedule(*s, c.schedule, c.fusion.sigma);
  if (auto s = root.child("guidance")) parse_guidance(*s, c.fusion.weights);
  if (auto s = root.child("fusion")) parse_fusion(*s, c.fusion);
  if (auto s = root.child("conditions")) parse_conditions(*s, c.conditions);
  if (auto s = root.child("sampling")) parse_sampling(*s, c.sampling);
  if (auto s = root.child("training")) parse_training(*s, c.training);
  if (auto s = root.child("sweep")) parse_sweep(*s, c.sweep);
  root.finish();

  const MixtureWorld world = c.world.build();
  auto check_index = [](std::size_t v, std::size_t n, const char* path) {
    if (v >= n) throw ConfigError(path, "index " + std::to_string(v) + " out of range (" + std::to_string(n) + ")");
  };
  check_index(c.conditions.target_identity, world.num_identities(), "conditions.target_identity");
  check_index(c.conditions.reference_style, world.num_styles(), "conditions.reference_style");
  check_index(c.conditions.target_style, world.num_styles(), "conditions.target_style");
  for (std::size_t i = 0; i < c.conditions.extra_identities.size(); ++i) {
    check_index(c.conditions.extra_identities[i], world.num_identities(), "conditions.extra_identities");
  }
  if (!c.conditions.extra_identities.empty() &&
      c.fusion.weights.omega_list.size() != c.conditions.extra_identities.size() + 1) {
    throw ConfigError("guidance.omega_list", "needs one weight per identity condition (" +
                                                 std::to_string(c.conditions.extra_identities.size() + 1) + ")");
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open config file");
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path, std::string("malformed JSON: ") + e.what());
  }
  return parse_config(doc);
}

std::string to_string(PredictorKind kind) { return kind == PredictorKind::oracle ? "oracle" : "denoiser"; }

Json to_json(const RunConfig& c) {
  Json j;
  j["seed"] = c.seed;
  if (c.output_dir) j["output_dir"] = *c.output_dir;

  Json w;
  w["preset"] = c.world.preset;
  if (c.world.preset == "custom") {
    w["dim"] = c.world.dim;
    w["variance"] = c.world.variance;
    w["identity_means"] = c.world.identity_means;
    Json styles = Json::array();
    for (const StyleMap& m : c.world.styles) styles.push_back(Json{{"A", m.A}, {"b", m.b}});
    w["styles"] = styles;
  }
  j["world"] = w;

  j["schedule"] = Json{{"T", c.schedule.T},
                       {"beta_start", c.schedule.beta_start},
                       {"beta_end", c.schedule.beta_end},
                       {"sigma", to_string(c.fusion.sigma.kind)},
                       {"eta", c.fusion.sigma.eta},
                       {"sigma_values", c.fusion.sigma.values}};
  const GuidanceWeights& g = c.fusion.weights;
  j["guidance"] = Json{{"omega", g.omega}, {"omega1", g.omega1}, {"omega2", g.omega2},
                       {"omega_list", g.omega_list}, {"omega_C", g.omega_C}};
  j["fusion"] = Json{{"mode", to_string(c.fusion.mode)},
                     {"m", c.fusion.m},
                     {"gamma", c.fusion.gamma},
                     {"use_refinement", c.fusion.use_refinement},
                     {"update", to_string(c.fusion.update)}};
  const ConditionSpec& cs = c.conditions;
  j["conditions"] = Json{{"target_identity", cs.target_identity},
                         {"reference_style", cs.reference_style},
                         {"target_style", cs.target_style},
                         {"identity_strength", number_json(cs.identity_strength)},
                         {"leak_strength", number_json(cs.leak_strength)},
                         {"text_strength", number_json(cs.text_strength)},
                         {"extra_identities", cs.extra_identities}};
  const SamplingSpec& sp = c.sampling;
  j["sampling"] = Json{{"predictor", to_string(sp.predictor)}, {"samples", sp.samples},
                       {"repeats", sp.repeats}, {"workers", sp.workers},
                       {"keep_trajectories", sp.keep_trajectories}, {"svg", sp.svg}};
  const TrainingSpec& t = c.training;
  j["training"] = Json{{"denoiser_steps", t.denoiser_steps},
                       {"denoiser_hidden", t.denoiser.hidden},
                       {"denoiser_batch", t.denoiser.batch},
                       {"denoiser_learning_rate", t.denoiser.learning_rate},
                       {"encoder_steps", t.encoder.steps},
                       {"encoder_batch", t.encoder.batch},
                       {"encoder_learning_rate", t.encoder.learning_rate},
                       {"encoder_hidden", t.encoder.hidden},
                       {"lambda", t.encoder.lambda},
                       {"augment", t.encoder.augment},
                       {"free_embedding", t.encoder.free_embedding},
                       {"finetune_steps", t.finetune_steps},
                       {"finetune_batch", t.finetune_batch},
                       {"finetune_learning_rate", t.finetune_learning_rate},
                       {"eval_draws", t.eval_draws},
                       {"eval_samples", t.eval_samples},
                       {"eval_omega", t.eval_omega}};
  j["sweep"] = Json{{"lambdas", c.sweep.lambdas}, {"repeats", c.sweep.repeats},
                    {"samples", c.sweep.samples}, {"omega", c.sweep.omega}};
  return j;
}

}  // namespace fusion
