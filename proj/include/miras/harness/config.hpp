#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "miras/harness/attention.hpp"
#include "miras/harness/task.hpp"
#include "miras/models.hpp"
#include "miras/reference.hpp"

// Config document (JSON):
//
//   {
//     "models":     [ <model>, ... ],
//     "tasks":      [ <task>, ... ],
//     "seeds":      [ 0, 1, ... ],
//     "output_dir": "runs/default"
//   }
//
//   <model> is one of
//     {"type": "miras", "name": ..., "preset": "moneta"|"yaad"|"memora"|"l2_decay"|"delta_rule"|"hebbian"|"dot_decay",
//      "memory": {...}, "bias": {...}, "gate": {...}, "learner": {...}, "signals": {...}, "chunk_size": 16}
//     {"type": "reference", "name": ..., "rule": "deltanet", "alpha": 1.0, "beta": 1.0, "momentum_decay": 0.9}
//     {"type": "attention", "name": ..., "temperature": 0.01}     (temperature omitted: sqrt(d))
//
//   <task>: {"kind": "pair_recall"|"noisy_pair_recall"|"copy"|"sniah_toy", "d": 16, "T": 16,
//            "outlier_rate": 0.1, "outlier_scale": 100, "needle_position": 0, "orthonormal": true}
//
// Every object rejects fields it does not know.
namespace miras::harness {

using json = nlohmann::json;

class ConfigError : public FormatError {
 public:
  using FormatError::FormatError;
};

struct ReferenceEntry {
  std::string name;
  ReferenceRule rule = ReferenceRule::kDeltaNet;
  double alpha = 1.0;
  double beta = 1.0;
  double momentum_decay = 0.9;
};

struct AttentionEntry {
  std::string name = "attention";
  std::optional<double> temperature;
};

using ModelEntry = std::variant<MirasSpec, ReferenceEntry, AttentionEntry>;

struct SuiteConfig {
  std::vector<ModelEntry> models;
  std::vector<TaskSpec> tasks;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "runs";
};

// ---------------------------------------------------------------------------
// Serialization

inline json to_json(const SmoothCfg& s) { return {{"sign_sharpness", s.sign_sharpness}, {"abs_epsilon", s.abs_epsilon}}; }

inline json to_json(const AttentionalBias& b) {
  json j = {{"kind", to_string(b.kind)}, {"p", b.p}, {"threshold", b.threshold}};
  j["smooth"] = b.smooth ? to_json(*b.smooth) : json(nullptr);
  return j;
}

inline const char* to_string(SlicePolicy p) { return p == SlicePolicy::kPerRow ? "per_row" : "whole_tensor"; }
inline const char* to_string(LqForm f) { return f == LqForm::kPrimal ? "primal" : "dual"; }
inline const char* to_string(GradientPoint g) { return g == GradientPoint::kPrevious ? "previous" : "retained"; }
inline const char* to_string(MomentumSign s) { return s == MomentumSign::kAdd ? "add" : "subtract"; }

inline json to_json(const RetentionGate& g) {
  return {{"kind", to_string(g.kind)},     {"q", g.q},
          {"c", g.c},                      {"slices", to_string(g.slices)},
          {"lq_form", to_string(g.lq_form)}, {"smooth_threshold", g.smooth_threshold},
          {"g", g.g.name},                 {"gradient_point", to_string(g.gradient_point)}};
}

inline json to_json(const InnerLearner& l) {
  return {{"kind", to_string(l.kind)}, {"momentum_decay", l.momentum_decay}, {"sign", to_string(l.sign)}};
}

inline json to_json(const MemoryConfig& m) {
  return {{"kind", to_string(m.kind)}, {"d_k", m.d_k}, {"d_v", m.d_v}, {"expansion", m.expansion},
          {"init_std", m.init_std}};
}

inline json to_json(const SignalConfig& s) {
  json j = {{"alpha", s.alpha}, {"eta", s.eta}, {"gamma", s.gamma}};
  j["delta"] = s.delta ? json(*s.delta) : json(nullptr);
  return j;
}

inline json to_json(const MirasSpec& s) {
  return {{"type", "miras"},
          {"name", s.name},
          {"memory", to_json(s.memory)},
          {"bias", to_json(s.bias)},
          {"gate", to_json(s.gate)},
          {"learner", to_json(s.learner)},
          {"signals", to_json(s.signals)},
          {"chunk_size", s.chunk_size}};
}

inline json to_json(const ReferenceEntry& r) {
  return {{"type", "reference"},   {"name", r.name},     {"rule", to_string(r.rule)},
          {"alpha", r.alpha},      {"beta", r.beta},     {"momentum_decay", r.momentum_decay}};
}

inline json to_json(const AttentionEntry& a) {
  json j = {{"type", "attention"}, {"name", a.name}};
  j["temperature"] = a.temperature ? json(*a.temperature) : json(nullptr);
  return j;
}

inline json to_json(const ModelEntry& m) {
  return std::visit([](const auto& e) { return to_json(e); }, m);
}

inline json to_json(const TaskSpec& t) {
  return {{"kind", to_string(t.kind)},         {"d", t.d},
          {"T", t.T},                          {"outlier_rate", t.outlier_rate},
          {"outlier_scale", t.outlier_scale},  {"needle_position", t.needle_position},
          {"orthonormal", t.orthonormal}};
}

inline std::string model_name(const ModelEntry& m) {
  return std::visit([](const auto& e) { return e.name; }, m);
}

// 64-bit FNV-1a of the canonical JSON of a model entry, as 16 hex digits.
inline std::string spec_hash(const ModelEntry& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_json(m).dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = hex[h & 0xF];
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!ok.count(it.key())) throw ConfigError(path_ + "." + it.key() + ": unknown field");
  }

  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  template <typename T>
  T get(const char* key, T fallback) const {
    if (!has(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(field(key) + ": wrong type");
    }
  }

  std::size_t get_size(const char* key, std::size_t fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      throw ConfigError(field(key) + ": expected a non-negative integer");
    return v.get<std::size_t>();
  }

  Reader child(const char* key) const { return Reader(j_.at(key), field(key)); }

  std::string field(const char* key) const { return path_ + "." + key; }
  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(path_ + ": " + msg); }

 private:
  const json& j_;
  std::string path_;
};

inline BiasKind bias_kind_from_string(const std::string& s, const std::string& where) {
  for (BiasKind k : {BiasKind::kDotProduct, BiasKind::kL2, BiasKind::kLp, BiasKind::kHuberCoord, BiasKind::kHuberNorm,
                     BiasKind::kHuberMixture, BiasKind::kRobustShift, BiasKind::kL1})
    if (s == to_string(k)) return k;
  throw ConfigError(where + ": unknown bias kind '" + s + "'");
}

inline GateKind gate_kind_from_string(const std::string& s, const std::string& where) {
  for (GateKind k : {GateKind::kDecay, GateKind::kLqDual, GateKind::kKlSoftmax, GateKind::kElasticLocal,
                     GateKind::kElasticFtrl, GateKind::kFDivergence, GateKind::kBregmanSigmoid})
    if (s == to_string(k)) return k;
  throw ConfigError(where + ": unknown gate kind '" + s + "'");
}

inline LearnerKind learner_kind_from_string(const std::string& s, const std::string& where) {
  for (LearnerKind k : {LearnerKind::kGD, LearnerKind::kGDMomentum, LearnerKind::kFtrlQuadratic})
    if (s == to_string(k)) return k;
  throw ConfigError(where + ": unknown learner kind '" + s + "'");
}

template <typename E>
E pick(const std::string& s, std::initializer_list<std::pair<const char*, E>> options, const std::string& where) {
  for (const auto& [name, e] : options)
    if (s == name) return e;
  throw ConfigError(where + ": unsupported value '" + s + "'");
}

inline MirasSpec preset(const std::string& name, const std::string& where) {
  if (name == "moneta") return MirasSpec::moneta();
  if (name == "yaad") return MirasSpec::yaad();
  if (name == "memora") return MirasSpec::memora();
  if (name == "l2_decay") return MirasSpec::l2_decay();
  if (name == "delta_rule") return MirasSpec::delta_rule();
  if (name == "hebbian") return MirasSpec::hebbian();
  if (name == "dot_decay") return MirasSpec::dot_decay();
  throw ConfigError(where + ": unknown preset '" + name + "'");
}

inline void read_bias(const Reader& r, AttentionalBias& b) {
  r.allow({"kind", "p", "threshold", "smooth"});
  if (r.has("kind")) b.kind = bias_kind_from_string(r.get<std::string>("kind", ""), r.field("kind"));
  b.p = r.get<double>("p", b.p);
  b.threshold = r.get<double>("threshold", b.threshold);
  if (r.has("smooth")) {
    const Reader s = r.child("smooth");
    s.allow({"sign_sharpness", "abs_epsilon"});
    SmoothCfg cfg;
    cfg.sign_sharpness = s.get<double>("sign_sharpness", cfg.sign_sharpness);
    cfg.abs_epsilon = s.get<double>("abs_epsilon", cfg.abs_epsilon);
    b.smooth = cfg;
  }
}

inline void read_gate(const Reader& r, RetentionGate& g) {
  r.allow({"kind", "q", "c", "slices", "lq_form", "smooth_threshold", "g", "gradient_point"});
  if (r.has("kind")) g.kind = gate_kind_from_string(r.get<std::string>("kind", ""), r.field("kind"));
  g.q = r.get<double>("q", g.q);
  g.c = r.get<double>("c", g.c);
  if (r.has("slices"))
    g.slices = pick<SlicePolicy>(r.get<std::string>("slices", ""),
                                 {{"per_row", SlicePolicy::kPerRow}, {"whole_tensor", SlicePolicy::kWholeTensor}},
                                 r.field("slices"));
  if (r.has("lq_form"))
    g.lq_form = pick<LqForm>(r.get<std::string>("lq_form", ""), {{"primal", LqForm::kPrimal}, {"dual", LqForm::kDual}},
                             r.field("lq_form"));
  g.smooth_threshold = r.get<bool>("smooth_threshold", g.smooth_threshold);
  if (r.has("g")) {
    try {
      g.g = MonotoneMap::by_name(r.get<std::string>("g", ""));
    } catch (const ContractError& e) {
      throw ConfigError(r.field("g") + ": " + e.what());
    }
  }
  if (r.has("gradient_point"))
    g.gradient_point = pick<GradientPoint>(r.get<std::string>("gradient_point", ""),
                                           {{"previous", GradientPoint::kPrevious}, {"retained", GradientPoint::kRetained}},
                                           r.field("gradient_point"));
}

inline MirasSpec read_miras(const Reader& r) {
  r.allow({"type", "name", "preset", "memory", "bias", "gate", "learner", "signals", "chunk_size"});
  MirasSpec s = r.has("preset") ? preset(r.get<std::string>("preset", ""), r.field("preset")) : MirasSpec{};
  s.name = r.get<std::string>("name", s.name);
  if (r.has("memory")) {
    const Reader m = r.child("memory");
    m.allow({"kind", "d_k", "d_v", "expansion", "init_std"});
    if (m.has("kind"))
      s.memory.kind = pick<MemoryKind>(m.get<std::string>("kind", ""),
                                       {{"matrix", MemoryKind::kMatrix}, {"mlp", MemoryKind::kMlp}}, m.field("kind"));
    s.memory.d_k = m.get_size("d_k", s.memory.d_k);
    s.memory.d_v = m.get_size("d_v", s.memory.d_v);
    s.memory.expansion = m.get_size("expansion", s.memory.expansion);
    s.memory.init_std = m.get<double>("init_std", s.memory.init_std);
  }
  if (r.has("bias")) read_bias(r.child("bias"), s.bias);
  if (r.has("gate")) read_gate(r.child("gate"), s.gate);
  if (r.has("learner")) {
    const Reader l = r.child("learner");
    l.allow({"kind", "momentum_decay", "sign"});
    if (l.has("kind")) s.learner.kind = learner_kind_from_string(l.get<std::string>("kind", ""), l.field("kind"));
    s.learner.momentum_decay = l.get<double>("momentum_decay", s.learner.momentum_decay);
    if (l.has("sign"))
      s.learner.sign = pick<MomentumSign>(l.get<std::string>("sign", ""),
                                          {{"add", MomentumSign::kAdd}, {"subtract", MomentumSign::kSubtract}},
                                          l.field("sign"));
  }
  if (r.has("signals")) {
    const Reader g = r.child("signals");
    g.allow({"alpha", "eta", "delta", "gamma"});
    s.signals.alpha = g.get<double>("alpha", s.signals.alpha);
    s.signals.eta = g.get<double>("eta", s.signals.eta);
    if (g.has("delta")) s.signals.delta = g.get<double>("delta", 1.0);
    s.signals.gamma = g.get<double>("gamma", s.signals.gamma);
  }
  s.chunk_size = r.get_size("chunk_size", s.chunk_size);
  try {
    MirasSpec probe = s;
    if (probe.memory.d_k == 0) probe.memory.d_k = 1;
    if (probe.memory.d_v == 0) probe.memory.d_v = probe.memory.d_k;
    probe.validate();
  } catch (const Error& e) {
    r.fail(e.what());
  }
  return s;
}

inline ModelEntry read_model(const Reader& r, const json& j) {
  const std::string type = j.contains("type") && j["type"].is_string() ? j["type"].get<std::string>() : "miras";
  if (type == "miras") return read_miras(r);
  if (type == "reference") {
    r.allow({"type", "name", "rule", "alpha", "beta", "momentum_decay"});
    ReferenceEntry e;
    try {
      e.rule = reference_rule_from_string(r.get<std::string>("rule", "deltanet"));
    } catch (const ContractError& ex) {
      throw ConfigError(r.field("rule") + ": " + ex.what());
    }
    e.name = r.get<std::string>("name", to_string(e.rule));
    e.alpha = r.get<double>("alpha", e.alpha);
    e.beta = r.get<double>("beta", e.beta);
    e.momentum_decay = r.get<double>("momentum_decay", e.momentum_decay);
    return e;
  }
  if (type == "attention") {
    r.allow({"type", "name", "temperature"});
    AttentionEntry e;
    e.name = r.get<std::string>("name", e.name);
    if (r.has("temperature")) {
      e.temperature = r.get<double>("temperature", 1.0);
      if (!(*e.temperature > 0.0)) throw ConfigError(r.field("temperature") + ": must be > 0");
    }
    return e;
  }
  throw ConfigError(r.field("type") + ": unknown model type '" + type + "'");
}

inline TaskSpec read_task(const Reader& r) {
  r.allow({"kind", "d", "T", "outlier_rate", "outlier_scale", "needle_position", "orthonormal"});
  TaskSpec t;
  if (!r.has("kind")) r.fail("missing field 'kind'");
  try {
    t.kind = task_kind_from_string(r.get<std::string>("kind", ""));
  } catch (const ContractError& e) {
    throw ConfigError(r.field("kind") + ": " + e.what());
  }
  t.d = r.get_size("d", t.d);
  t.T = r.get_size("T", t.T);
  t.outlier_rate = r.get<double>("outlier_rate", t.outlier_rate);
  t.outlier_scale = r.get<double>("outlier_scale", t.outlier_scale);
  t.needle_position = r.get_size("needle_position", t.needle_position);
  t.orthonormal = r.get<bool>("orthonormal", t.orthonormal);
  try {
    t.validate();
  } catch (const Error& e) {
    r.fail(e.what());
  }
  return t;
}

}  // namespace detail

inline SuiteConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports a byte offset; turn it into a line number.
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()); ++i)
      if (text[i] == '\n') ++line;
    throw ConfigError("line " + std::to_string(line) + ": " + e.what());
  }
  const detail::Reader root(doc, "config");
  root.allow({"models", "tasks", "seeds", "output_dir"});
  SuiteConfig cfg;
  for (const char* key : {"models", "tasks", "seeds"}) {
    if (!doc.contains(key) || !doc[key].is_array() || doc[key].empty())
      throw ConfigError(std::string("config.") + key + ": expected a non-empty array");
  }
  for (std::size_t i = 0; i < doc["models"].size(); ++i) {
    const std::string path = "config.models[" + std::to_string(i) + "]";
    cfg.models.push_back(detail::read_model(detail::Reader(doc["models"][i], path), doc["models"][i]));
  }
  for (std::size_t i = 0; i < doc["tasks"].size(); ++i)
    cfg.tasks.push_back(detail::read_task(detail::Reader(doc["tasks"][i], "config.tasks[" + std::to_string(i) + "]")));
  for (std::size_t i = 0; i < doc["seeds"].size(); ++i) {
    const json& s = doc["seeds"][i];
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
      throw ConfigError("config.seeds[" + std::to_string(i) + "]: expected a non-negative integer");
    cfg.seeds.push_back(s.get<std::uint64_t>());
  }
  cfg.output_dir = root.get<std::string>("output_dir", cfg.output_dir);
  return cfg;
}

inline SuiteConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace miras::harness
