#include "config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "evolvtrip/error.hpp"
#include "evolvtrip/hashing.hpp"

using nlohmann::json;

namespace evolvtrip::pipeline {

namespace {

[[noreturn]] void bad(const std::string& msg) { throw Error(ErrorCode::ConfigInvalid, msg); }

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) bad(where + " must be an object");
  for (const auto& [k, _] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* x) { return k == x; })) {
      bad("unknown key '" + k + "' in " + (where.empty() ? std::string("config") : where));
    }
  }
}

// Interpolates every string value in place.
void interpolate_all(json& j) {
  if (j.is_string()) {
    j = interpolate_env(j.get<std::string>());
  } else if (j.is_structured()) {
    for (auto& v : j) interpolate_all(v);
  }
}

GenerationSettings settings_from(const json& j, const std::string& where) {
  try {
    if (j.is_string()) {
      GenerationSettings s;
      s.model_id = j.get<std::string>();
      return s;
    }
    return GenerationSettings::from_json(j);
  } catch (const Error& e) {
    bad(where + ": " + e.detail());
  }
}

template <typename T>
T get_as(const json& j, const char* key, const std::string& where, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    bad(where + "." + key + " has the wrong type");
  }
}

}  // namespace

TripleToggle triple_toggle_from_string(std::string_view s) {
  if (s == "on") return TripleToggle::On;
  if (s == "off") return TripleToggle::Off;
  if (s == "both") return TripleToggle::Both;
  bad("expected on|off|both, got '" + std::string(s) + "'");
}

std::string interpolate_env(std::string_view s) {
  std::string out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == '$' && i + 1 < s.size() && s[i + 1] == '{') {
      auto close = s.find('}', i + 2);
      if (close == std::string_view::npos) bad("unterminated ${ in '" + std::string(s) + "'");
      std::string name(s.substr(i + 2, close - i - 2));
      const char* v = std::getenv(name.c_str());
      if (v == nullptr) bad("environment variable " + name + " is not set");
      out += v;
      i = close + 1;
    } else {
      out += s[i++];
    }
  }
  return out;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) bad("cannot read config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  json j;
  try {
    j = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    bad(path.string() + ": " + e.what());
  }
  auto cfg = from_json(j, std::filesystem::absolute(path).parent_path());
  cfg.source_sha256 = sha256_hex(buf.str());
  return cfg;
}

PipelineConfig PipelineConfig::from_json(const json& raw, const std::filesystem::path& base_dir) {
  json j = raw;
  interpolate_all(j);
  only_keys(j, "", {"seed", "corpus", "output_dir", "backend", "backends", "cache_dir", "templates", "characters",
                    "extraction", "merge", "generation", "verification", "eval", "finetune"});
  PipelineConfig c;
  c.base_dir = base_dir;

  if (auto it = j.find("seed"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer() || it->get<std::int64_t>() < 0) bad("seed must be a non-negative integer");
    c.seed = it->get<std::uint64_t>();
  }

  if (auto it = j.find("corpus"); it != j.end()) {
    const json& s = *it;
    only_keys(s, "corpus", {"path", "format", "adapter", "aliases", "books", "threads"});
    c.corpus.path = get_as<std::string>(s, "path", "corpus", "");
    try {
      c.corpus.format = corpus_format_from_string(get_as<std::string>(s, "format", "corpus", "coser-json"));
      if (auto a = s.find("adapter"); a != s.end()) c.corpus.adapter = SourceAdapter::from_json(*a);
    } catch (const Error& e) {
      bad("corpus: " + e.detail());
    }
    if (auto a = s.find("aliases"); a != s.end() && !a->is_null()) c.corpus.aliases = a->get<std::string>();
    c.corpus.books = get_as<std::vector<std::string>>(s, "books", "corpus", {});
    c.corpus.threads = get_as<unsigned>(s, "threads", "corpus", 1);
  }
  if (c.corpus.path.empty()) bad("corpus.path is required");

  c.output_dir = get_as<std::string>(j, "output_dir", "", "out");
  c.backend = get_as<std::string>(j, "backend", "", "replay");
  if (auto it = j.find("backends"); it != j.end()) {
    if (!it->is_object()) bad("backends must be an object");
    for (const auto& [name, b] : it->items()) {
      try {
        c.backends[name] = BackendConfig::from_json(b);
      } catch (const Error& e) {
        bad("backends." + name + ": " + e.detail());
      }
    }
  }
  if (auto it = j.find("cache_dir"); it != j.end() && !it->is_null()) c.cache_dir = it->get<std::string>();
  if (auto it = j.find("templates"); it != j.end()) {
    if (!it->is_object()) bad("templates must be an object");
    for (const auto& [name, p] : it->items()) c.templates[name] = p.get<std::string>();
  }
  c.characters = get_as<std::vector<std::string>>(j, "characters", "", {});

  if (auto it = j.find("extraction"); it != j.end()) {
    only_keys(*it, "extraction", {"model", "strict_perspective"});
    if (auto m = it->find("model"); m != it->end()) c.extraction.model = settings_from(*m, "extraction.model");
    c.extraction.strict_perspective = get_as<bool>(*it, "strict_perspective", "extraction", false);
  }
  if (auto it = j.find("merge"); it != j.end()) {
    try {
      c.merge = MergeConfig::from_json(*it);
    } catch (const Error& e) {
      bad("merge: " + e.detail());
    }
  }
  if (auto it = j.find("generation"); it != j.end()) {
    only_keys(*it, "generation", {"model", "shuffle_options", "max_attempts"});
    if (auto m = it->find("model"); m != it->end()) c.generation.model = settings_from(*m, "generation.model");
    c.generation.shuffle_options = get_as<bool>(*it, "shuffle_options", "generation", true);
    c.generation.max_attempts = get_as<int>(*it, "max_attempts", "generation", 3);
  }
  if (auto it = j.find("verification"); it != j.end()) {
    only_keys(*it, "verification", {"model", "question_sample_rate", "triple_sample_rate"});
    if (auto m = it->find("model"); m != it->end()) c.verification.model = settings_from(*m, "verification.model");
    c.verification.question_sample_rate = get_as<double>(*it, "question_sample_rate", "verification", 1.0);
    c.verification.triple_sample_rate = get_as<double>(*it, "triple_sample_rate", "verification", 0.4);
  }
  if (auto it = j.find("eval"); it != j.end()) {
    only_keys(*it, "eval", {"models", "conditions", "variant", "summary_window", "question_states", "layout"});
    try {
      if (auto m = it->find("models"); m != it->end()) {
        for (const auto& x : *m) c.eval.models.push_back(settings_from(x, "eval.models"));
      }
      if (auto m = it->find("conditions"); m != it->end()) {
        c.eval.conditions.clear();
        for (const auto& x : *m) c.eval.conditions.push_back(EvalCondition::from_label(x.get<std::string>()));
      }
      c.eval.variant = prompt_variant_from_string(get_as<std::string>(*it, "variant", "eval", "guided"));
      if (auto m = it->find("summary_window"); m != it->end() && !m->is_null()) c.eval.summary_window = m->get<int>();
      if (auto m = it->find("question_states"); m != it->end()) {
        c.eval.question_states.clear();
        for (const auto& x : *m) c.eval.question_states.insert(question_state_from_string(x.get<std::string>()));
      }
      c.eval.layout = report_layout_from_string(get_as<std::string>(*it, "layout", "eval", "plain"));
    } catch (const Error& e) {
      bad("eval: " + e.detail());
    } catch (const json::exception& e) {
      bad(std::string("eval: ") + e.what());
    }
  }
  if (c.eval.models.empty()) c.eval.models.push_back(GenerationSettings());

  if (auto it = j.find("finetune"); it != j.end()) {
    only_keys(*it, "finetune", {"ood_books", "context", "waive_verification", "with_triples"});
    try {
      auto ood = get_as<std::vector<std::string>>(*it, "ood_books", "finetune", {});
      c.finetune.ood_books = {ood.begin(), ood.end()};
      c.finetune.context = context_mode_from_string(get_as<std::string>(*it, "context", "finetune", "current"));
      c.finetune.waive_verification = get_as<bool>(*it, "waive_verification", "finetune", false);
      c.finetune.with_triples = triple_toggle_from_string(get_as<std::string>(*it, "with_triples", "finetune", "both"));
    } catch (const Error& e) {
      bad("finetune: " + e.detail());
    }
  }

  c.validate();
  return c;
}

void PipelineConfig::validate() const {
  if (backends.empty()) bad("at least one backend must be configured");
  if (!backends.count(backend)) bad("backend '" + backend + "' is not in backends");
  for (double r : {verification.question_sample_rate, verification.triple_sample_rate}) {
    if (!(r >= 0.0 && r <= 1.0)) bad("sample rates must lie in [0, 1]");
  }
  if (generation.max_attempts < 1) bad("generation.max_attempts must be at least 1");
  if (eval.summary_window && *eval.summary_window < 0) bad("eval.summary_window must be non-negative");
  if (eval.conditions.empty()) bad("eval.conditions must not be empty");
  bool sampled = generation.shuffle_options || verification.question_sample_rate < 1.0 ||
                 verification.triple_sample_rate < 1.0;
  if (sampled && !seed) bad("seed is required when options are shuffled or verification is sampled");
}

std::filesystem::path PipelineConfig::resolve(const std::filesystem::path& p) const {
  if (p.empty() || p.is_absolute()) return p;
  return base_dir / p;
}

const BackendConfig& PipelineConfig::active_backend() const {
  auto it = backends.find(backend);
  if (it == backends.end()) bad("backend '" + backend + "' is not configured");
  return it->second;
}

}  // namespace evolvtrip::pipeline
