#include "faceswap/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>

namespace faceswap::config {

namespace {

using pipeline::Config;

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(ErrorCode::invalid_config, "config key '" + key + "': cannot parse '" + v +
                                      "' as a boolean");
}

int64_t parse_int(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    int64_t out = std::stoll(v, &pos);
    require(pos == v.size(), ErrorCode::invalid_config, "trailing characters");
    return out;
  } catch (const std::exception&) {
    fail(ErrorCode::invalid_config,
         "config key '" + key + "': cannot parse '" + v + "' as an integer");
  }
}

uint64_t parse_u64(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    uint64_t out = std::stoull(v, &pos);
    require(pos == v.size(), ErrorCode::invalid_config, "trailing characters");
    return out;
  } catch (const std::exception&) {
    fail(ErrorCode::invalid_config,
         "config key '" + key + "': cannot parse '" + v + "' as an unsigned integer");
  }
}

double parse_double(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    double out = std::stod(v, &pos);
    require(pos == v.size(), ErrorCode::invalid_config, "trailing characters");
    return out;
  } catch (const std::exception&) {
    fail(ErrorCode::invalid_config,
         "config key '" + key + "': cannot parse '" + v + "' as a number");
  }
}

using Setter = std::function<void(Config&, const std::string& value, const std::string& key)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"model.resolution", [](Config& c, const std::string& v, const std::string& k) {
         c.model.gen.resolution = parse_int(v, k);
       }},
      {"model.latent_width", [](Config& c, const std::string& v, const std::string& k) {
         c.model.gen.latent_width = parse_int(v, k);
       }},
      {"model.channel_cap", [](Config& c, const std::string& v, const std::string& k) {
         c.model.gen.channel_cap = parse_int(v, k);
       }},
      {"model.channel_budget", [](Config& c, const std::string& v, const std::string& k) {
         c.model.gen.channel_budget = parse_int(v, k);
       }},
      {"model.channel_scale", [](Config& c, const std::string& v, const std::string& k) {
         c.model.gen.channel_scale = parse_double(v, k);
       }},
      {"model.noise_injection", [](Config& c, const std::string& v, const std::string& k) {
         c.model.gen.noise_injection = parse_bool(v, k);
       }},
      {"model.structure_k", [](Config& c, const std::string& v, const std::string& k) {
         c.model.structure_k = parse_int(v, k);
       }},
      {"model.num_landmarks", [](Config& c, const std::string& v, const std::string& k) {
         c.model.num_landmarks = parse_int(v, k);
       }},
      {"model.heatmap_grid", [](Config& c, const std::string& v, const std::string& k) {
         c.model.heatmap_grid = parse_int(v, k);
       }},
      {"model.heatmap_sigma", [](Config& c, const std::string& v, const std::string& k) {
         c.model.heatmap_sigma = parse_double(v, k);
       }},
      {"model.hard_mask", [](Config& c, const std::string& v, const std::string& k) {
         c.model.hard_mask = parse_bool(v, k);
       }},
      {"model.disable_appearance_swap",
       [](Config& c, const std::string& v, const std::string& k) {
         c.model.disable_appearance_swap = parse_bool(v, k);
       }},
      {"model.disable_background_transfer",
       [](Config& c, const std::string& v, const std::string& k) {
         c.model.disable_background_transfer = parse_bool(v, k);
       }},
      {"train.learning_rate", [](Config& c, const std::string& v, const std::string& k) {
         c.train.learning_rate = parse_double(v, k);
       }},
      {"train.beta1", [](Config& c, const std::string& v, const std::string& k) {
         c.train.beta1 = parse_double(v, k);
       }},
      {"train.beta2", [](Config& c, const std::string& v, const std::string& k) {
         c.train.beta2 = parse_double(v, k);
       }},
      {"train.epsilon", [](Config& c, const std::string& v, const std::string& k) {
         c.train.epsilon = parse_double(v, k);
       }},
      {"train.batch_size", [](Config& c, const std::string& v, const std::string& k) {
         c.train.batch_size = parse_int(v, k);
       }},
      {"train.iterations", [](Config& c, const std::string& v, const std::string& k) {
         c.train.iterations = parse_int(v, k);
       }},
      {"train.pretrain_iterations",
       [](Config& c, const std::string& v, const std::string& k) {
         c.train.pretrain_iterations = parse_int(v, k);
       }},
      {"train.lambda_adv", [](Config& c, const std::string& v, const std::string& k) {
         c.train.weights.adv = parse_double(v, k);
       }},
      {"train.lambda_id", [](Config& c, const std::string& v, const std::string& k) {
         c.train.weights.id = parse_double(v, k);
       }},
      {"train.lambda_lmk", [](Config& c, const std::string& v, const std::string& k) {
         c.train.weights.lmk = parse_double(v, k);
       }},
      {"train.lambda_rec", [](Config& c, const std::string& v, const std::string& k) {
         c.train.weights.rec = parse_double(v, k);
       }},
      {"train.lambda_st", [](Config& c, const std::string& v, const std::string& k) {
         c.train.weights.st = parse_double(v, k);
       }},
      {"train.alpha_perceptual",
       [](Config& c, const std::string& v, const std::string& k) {
         c.train.alpha_perceptual = parse_double(v, k);
       }},
      {"train.p_same", [](Config& c, const std::string& v, const std::string& k) {
         c.train.p_same = parse_double(v, k);
       }},
      {"train.seed", [](Config& c, const std::string& v, const std::string& k) {
         c.train.seed = parse_u64(v, k);
       }},
      {"train.freeze_generator",
       [](Config& c, const std::string& v, const std::string& k) {
         c.train.freeze_generator = parse_bool(v, k);
       }},
      {"train.train_inverter", [](Config& c, const std::string& v, const std::string& k) {
         c.train.train_inverter = parse_bool(v, k);
       }},
      {"train.hm_scope", [](Config& c, const std::string& v, const std::string& k) {
         if (v == "mask") c.train.hm_scope = losses::HmScope::mask;
         else if (v == "global") c.train.hm_scope = losses::HmScope::global;
         else fail(ErrorCode::invalid_config,
                   "config key '" + k + "': expected 'mask' or 'global', got '" + v + "'");
       }},
      {"providers.identity", [](Config& c, const std::string& v, const std::string&) {
         c.providers.identity = v;
       }},
      {"providers.landmark", [](Config& c, const std::string& v, const std::string&) {
         c.providers.landmark = v;
       }},
      {"providers.perceptual", [](Config& c, const std::string& v, const std::string&) {
         c.providers.perceptual = v;
       }},
      {"providers.flow", [](Config& c, const std::string& v, const std::string&) {
         c.providers.flow = v;
       }},
      {"providers.pose", [](Config& c, const std::string& v, const std::string&) {
         c.providers.pose = v;
       }},
      {"providers.expression", [](Config& c, const std::string& v, const std::string&) {
         c.providers.expression = v;
       }},
      {"video.lambda_ct", [](Config& c, const std::string& v, const std::string& k) {
         c.video.lambda_ct = parse_double(v, k);
       }},
      {"video.lambda_ft", [](Config& c, const std::string& v, const std::string& k) {
         c.video.lambda_ft = parse_double(v, k);
       }},
      {"video.flow_mode", [](Config& c, const std::string& v, const std::string& k) {
         require(v == "literal" || v == "midpoint", ErrorCode::invalid_config,
                 "config key '" + k + "': expected 'literal' or 'midpoint', got '" + v + "'");
         c.video.flow_mode = v;
       }},
      {"video.ft_aggregation", [](Config& c, const std::string& v, const std::string& k) {
         require(v == "group" || v == "plain_mse", ErrorCode::invalid_config,
                 "config key '" + k + "': expected 'group' or 'plain_mse', got '" + v + "'");
         c.video.ft_aggregation = v;
       }},
      {"video.temporal_steps", [](Config& c, const std::string& v, const std::string& k) {
         c.video.temporal_steps = parse_int(v, k);
       }},
      {"video.temporal_lr", [](Config& c, const std::string& v, const std::string& k) {
         c.video.temporal_lr = parse_double(v, k);
       }},
  };
  return table;
}

void set_key(Config& cfg, const std::string& dotted, const std::string& value) {
  auto it = setters().find(dotted);
  require(it != setters().end(), ErrorCode::invalid_config,
          "unknown config key '" + dotted + "'");
  it->second(cfg, value, dotted);
}

}  // namespace

pipeline::Config load_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io_error, "cannot open config file '" + path + "'");
  Config cfg;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      require(s.back() == ']', ErrorCode::invalid_config,
              path + ":" + std::to_string(lineno) + ": malformed section header");
      section = trim(s.substr(1, s.size() - 2));
      require(section == "model" || section == "train" || section == "providers" ||
                  section == "video",
              ErrorCode::invalid_config,
              path + ":" + std::to_string(lineno) + ": unknown section [" + section + "]");
      continue;
    }
    size_t eq = s.find('=');
    require(eq != std::string::npos, ErrorCode::invalid_config,
            path + ":" + std::to_string(lineno) + ": expected key = value");
    require(!section.empty(), ErrorCode::invalid_config,
            path + ":" + std::to_string(lineno) + ": key outside any section");
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    set_key(cfg, section + "." + key, value);
  }
  return cfg;
}

void apply_override(pipeline::Config& cfg, const std::string& assignment) {
  size_t eq = assignment.find('=');
  require(eq != std::string::npos, ErrorCode::invalid_config,
          "override '" + assignment + "' must look like section.key=value");
  set_key(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

pipeline::Config make(const std::string& path,
                      const std::vector<std::string>& overrides) {
  Config cfg = path.empty() ? Config{} : load_file(path);
  for (const auto& o : overrides) apply_override(cfg, o);
  cfg.model.gen.validate();
  require(cfg.train.p_same >= 0.0 && cfg.train.p_same <= 1.0,
          ErrorCode::invalid_config, "train.p_same must be in [0,1]");
  require(cfg.train.learning_rate > 0.0 && cfg.train.epsilon > 0.0,
          ErrorCode::invalid_config, "train.learning_rate and train.epsilon must be positive");
  return cfg;
}

}  // namespace faceswap::config
