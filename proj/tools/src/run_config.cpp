#include "dgd/cli/run_config.hpp"

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <regex>

#include "dgd/binary_io.hpp"
#include "dgd/error.hpp"
#include "dgd/hashing.hpp"

namespace dgd::cli {

namespace {

using Json = nlohmann::json;

/// Runs `parse` on a section; a JSON type error is narrowed to the first key
/// that fails on its own so the message can name it.
template <typename Fn>
auto parse_section(const Json& j, const std::string& section, Fn parse) -> decltype(parse(j)) {
  if (!j.is_object()) throw ConfigError("config key '" + section + "' must be an object");
  try {
    return parse(j);
  } catch (const Json::type_error& e) {
    for (const auto& [key, value] : j.items()) {
      try {
        parse(Json{{key, value}});
      } catch (const Json::type_error&) {
        if (value.is_object()) {
          // Nested sections carry their own strict parsers; report the nested key when possible.
          for (const auto& [inner, v] : value.items()) {
            try {
              parse(Json{{key, Json{{inner, v}}}});
            } catch (const Json::type_error& ie) {
              throw ConfigError("config key '" + section + "." + key + "." + inner + "': " + ie.what());
            } catch (...) {
            }
          }
        }
        throw ConfigError("config key '" + section + "." + key + "': " + e.what());
      } catch (...) {
      }
    }
    throw ConfigError("config section '" + section + "': " + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

template <typename T>
T get_key(const Json& value, const std::string& key) {
  try {
    return value.get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

Json default_config_json() { return RunConfig{}.to_json(); }

}  // namespace

Json EvalSettings::to_json() const {
  Json m = Json::array();
  for (auto mode : modes) m.push_back(to_string(mode));
  return {{"downstream", downstream.to_json()}, {"modes", m},
          {"seeds", seeds},                     {"random_baseline", random_baseline},
          {"sweep_top_k", sweep_top_k},         {"sweep_beta", sweep_beta}};
}

EvalSettings EvalSettings::from_json(const Json& j) {
  EvalSettings s;
  for (const auto& [key, value] : j.items()) {
    const std::string path = "eval." + key;
    if (key == "downstream") {
      s.downstream = parse_section(value, path, [&](const Json& v) { return TrainConfig::from_json(v, path); });
    } else if (key == "modes") {
      s.modes.clear();
      for (const auto& name : get_key<std::vector<std::string>>(value, path)) {
        try {
          s.modes.push_back(selection_mode_from_string(name));
        } catch (const InvalidArgument& e) {
          throw ConfigError("config key '" + path + "': " + e.what());
        }
      }
    } else if (key == "seeds") {
      s.seeds = get_key<std::vector<std::uint64_t>>(value, path);
    } else if (key == "random_baseline") {
      s.random_baseline = get_key<bool>(value, path);
    } else if (key == "sweep_top_k") {
      s.sweep_top_k = get_key<std::vector<int>>(value, path);
    } else if (key == "sweep_beta") {
      s.sweep_beta = get_key<std::vector<double>>(value, path);
    } else {
      throw ConfigError("unknown key '" + path + "'");
    }
  }
  return s;
}

void RunConfig::validate() const {
  try {
    data.validate();
    detector.validate();
    autoencoder.validate();
    denoiser.validate();
    distill.validate();
    eval.downstream.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  if (threads < 1) throw ConfigError("config key 'threads' must be >= 1");
  if (eval.modes.empty()) throw ConfigError("config key 'eval.modes' must not be empty");
  if (eval.seeds.empty()) throw ConfigError("config key 'eval.seeds' must not be empty");
  if (eval.sweep_top_k.empty() || eval.sweep_beta.empty())
    throw ConfigError("config keys 'eval.sweep_top_k' and 'eval.sweep_beta' must not be empty");
  for (int k : eval.sweep_top_k)
    if (k < 1) throw ConfigError("config key 'eval.sweep_top_k' entries must be >= 1");
  for (double b : eval.sweep_beta)
    if (!(b > 0.0 && b < 1.0)) throw ConfigError("config key 'eval.sweep_beta' entries must lie in (0, 1)");
  if (!run_id.empty() &&
      !std::regex_match(run_id, std::regex("[A-Za-z0-9._-]+")))
    throw ConfigError("config key 'run_id' may only contain letters, digits, '.', '_' and '-'");
}

Json RunConfig::to_json() const {
  return {{"run_id", run_id},
          {"output_root", output_root.string()},
          {"seed", seed},
          {"threads", threads},
          {"data", data.to_json()},
          {"detector", detector.to_json()},
          {"autoencoder", autoencoder.to_json()},
          {"denoiser", denoiser.to_json()},
          {"distill", distill.to_json()},
          {"eval", eval.to_json()}};
}

RunConfig RunConfig::from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  RunConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "run_id") c.run_id = get_key<std::string>(value, key);
    else if (key == "output_root") c.output_root = get_key<std::string>(value, key);
    else if (key == "seed") c.seed = get_key<std::uint64_t>(value, key);
    else if (key == "threads") c.threads = get_key<int>(value, key);
    else if (key == "data") c.data = parse_section(value, key, [](const Json& v) { return ToyDataSpec::from_json(v); });
    else if (key == "detector")
      c.detector = parse_section(value, key, [&](const Json& v) { return TrainConfig::from_json(v, key); });
    else if (key == "autoencoder")
      c.autoencoder = parse_section(value, key, [&](const Json& v) { return AutoencoderConfig::from_json(v, key); });
    else if (key == "denoiser")
      c.denoiser = parse_section(value, key, [&](const Json& v) { return DenoiserConfig::from_json(v, key); });
    else if (key == "distill")
      c.distill = parse_section(value, key, [&](const Json& v) { return DistillConfig::from_json(v, key); });
    else if (key == "eval")
      c.eval = parse_section(value, key, [](const Json& v) { return EvalSettings::from_json(v); });
    else throw ConfigError("unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

namespace {

/// Line of the quoted key path in the source text, following each component in turn.
int locate_key_line(const std::string& text, const std::string& dotted) {
  std::size_t pos = 0;
  std::size_t start = 0;
  bool found = false;
  while (start <= dotted.size()) {
    const std::size_t dot = dotted.find('.', start);
    const std::string part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    const std::size_t at = text.find("\"" + part + "\"", pos);
    if (at == std::string::npos) break;
    pos = at;
    found = true;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (!found) return 0;
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

/// Rejects duplicate keys inside one object, which the JSON parser would otherwise merge silently.
Json parse_strict(const std::string& text) {
  std::vector<std::vector<std::string>> seen;
  std::string duplicate;
  auto callback = [&](int, Json::parse_event_t event, Json& parsed) {
    switch (event) {
      case Json::parse_event_t::object_start: seen.emplace_back(); break;
      case Json::parse_event_t::object_end: seen.pop_back(); break;
      case Json::parse_event_t::key: {
        const auto key = parsed.get<std::string>();
        auto& keys = seen.back();
        if (std::find(keys.begin(), keys.end(), key) != keys.end() && duplicate.empty()) duplicate = key;
        keys.push_back(key);
        break;
      }
      default: break;
    }
    return true;
  };
  Json j;
  try {
    j = Json::parse(text, callback);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  if (!duplicate.empty())
    throw ConfigError("duplicate key '" + duplicate + "' (line " +
                      std::to_string(locate_key_line(text, duplicate)) + ")");
  return j;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  const Json j = parse_strict(text);
  try {
    return from_json(j);
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    std::smatch m;
    if (std::regex_search(msg, m, std::regex("key '([^']+)'"))) {
      const int line = locate_key_line(text, m[1].str());
      if (line > 0) throw ConfigError(msg + " (line " + std::to_string(line) + ")");
    }
    throw ConfigError(msg);
  }
}

std::string RunConfig::hash() const { return sha256_hex(to_json().dump()); }

void apply_overrides(RunConfig& cfg, const Overrides& o) {
  if (const char* root = std::getenv("DGD_OUTPUT_ROOT"); root && *root) cfg.output_root = root;
  if (const char* threads = std::getenv("DGD_THREADS"); threads && *threads) {
    char* end = nullptr;
    const long n = std::strtol(threads, &end, 10);
    if (*end != '\0' || n < 1) throw ConfigError("environment DGD_THREADS must be a positive integer");
    cfg.threads = static_cast<int>(n);
  }
  if (o.output_root) cfg.output_root = *o.output_root;
  if (o.run_id) cfg.run_id = *o.run_id;
  if (o.threads) cfg.threads = *o.threads;
  if (o.beta) cfg.distill.beta = *o.beta;
  if (o.top_k) cfg.distill.top_k = *o.top_k;
  if (o.candidates) cfg.distill.num_candidates = *o.candidates;
  if (o.guidance) cfg.distill.guidance_scale = *o.guidance;
  if (o.strength) cfg.distill.strength = *o.strength;
  if (o.ipc) cfg.distill.ipc = *o.ipc;
  if (o.seed) cfg.distill.seed = *o.seed;
  if (o.mode) {
    try {
      cfg.distill.mode = selection_mode_from_string(*o.mode);
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("--mode: ") + e.what());
    }
  }
  cfg.validate();
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& path, std::string* source_hash) {
  if (!path) {
    if (source_hash) *source_hash = sha256_hex(default_config_json().dump());
    return RunConfig{};
  }
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(*path);
  } catch (const std::exception& e) {
    throw ConfigError("cannot read config file " + path->string() + ": " + e.what());
  }
  if (source_hash) *source_hash = sha256_hex(bytes);
  return RunConfig::parse(std::string(bytes.begin(), bytes.end()));
}

}  // namespace dgd::cli
