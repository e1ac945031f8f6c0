#include "lscm/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "lscm/errors.hpp"

namespace lscm {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  if (!(in >> out) || !(in >> std::ws).eof()) throw ConfigError("invalid value '" + value + "' for " + key);
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  if (!value.empty() && value[0] == '-') throw ConfigError("invalid value '" + value + "' for " + key);
  return parse_number<std::size_t>(key, value);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("invalid boolean '" + value + "' for " + key);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void Config::set(const std::string& key, const std::string& value) {
  if (key == "c_v") c_v = parse_size(key, value);
  else if (key == "c_l") c_l = parse_size(key, value);
  else if (key == "c_h") c_h = parse_size(key, value);
  else if (key == "c_o") c_o = parse_size(key, value);
  else if (key == "c_s") c_s = parse_size(key, value);
  else if (key == "c_e") c_e = parse_size(key, value);
  else if (key == "mutan_rank") mutan_rank = parse_size(key, value);
  else if (key == "alpha") alpha = parse_number<double>(key, value);
  else if (key == "n_layers") n_layers = GraphDepth::parse(value);
  else if (key == "lr_base") lr_base = parse_number<double>(key, value);
  else if (key == "weight_decay") weight_decay = parse_number<double>(key, value);
  else if (key == "decay_mode") {
    if (value != "decoupled" && value != "coupled") throw ConfigError("decay_mode must be 'decoupled' or 'coupled'");
    decay_mode = value;
  } else if (key == "poly_power") poly_power = parse_number<double>(key, value);
  else if (key == "max_iters") max_iters = parse_size(key, value);
  else if (key == "batch_size") batch_size = parse_size(key, value);
  else if (key == "seed") seed = parse_size(key, value);
  else if (key == "freeze_cnn") freeze_cnn = parse_bool(key, value);
  else if (key == "mirror_augment") mirror_augment = parse_bool(key, value);
  else if (key == "checkpoint_every") checkpoint_every = parse_size(key, value);
  else if (key == "image_size") image_size = parse_size(key, value);
  else if (key == "data") data = value;
  else if (key == "embeddings") embeddings = value;
  else if (key == "mix") {
    try {
      DifficultyMix::parse(value);
    } catch (const InputError& e) {
      throw ConfigError(e.what());
    }
    mix = value;
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void Config::validate() const {
  for (auto [name, v] : {std::pair{"c_v", c_v}, {"c_l", c_l}, {"c_h", c_h}, {"c_o", c_o}, {"c_s", c_s},
                         {"c_e", c_e}, {"mutan_rank", mutan_rank}, {"batch_size", batch_size}}) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (!(poly_power > 0.0)) throw ConfigError("poly_power must be positive");
  if (!(lr_base >= 0.0)) throw ConfigError("lr_base must be non-negative");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (max_iters == 0) throw ConfigError("max_iters must be positive");
  if (image_size == 0 || image_size % 4 != 0) throw ConfigError("image_size must be a positive multiple of 4");
}

std::string Config::serialize() const {
  std::ostringstream os;
  os << "c_v = " << c_v << "\nc_l = " << c_l << "\nc_h = " << c_h << "\nc_o = " << c_o << "\nc_s = " << c_s
     << "\nc_e = " << c_e << "\nmutan_rank = " << mutan_rank << "\nalpha = " << fmt(alpha)
     << "\nn_layers = " << n_layers.str() << "\nlr_base = " << fmt(lr_base) << "\nweight_decay = " << fmt(weight_decay)
     << "\ndecay_mode = " << decay_mode
     << "\npoly_power = " << fmt(poly_power) << "\nmax_iters = " << max_iters << "\nbatch_size = " << batch_size
     << "\nseed = " << seed << "\nfreeze_cnn = " << (freeze_cnn ? "true" : "false")
     << "\nmirror_augment = " << (mirror_augment ? "true" : "false")
     << "\ncheckpoint_every = " << checkpoint_every << "\nimage_size = " << image_size << "\nmix = " << mix << '\n';
  if (!data.empty()) os << "data = " << data << '\n';
  if (!embeddings.empty()) os << "embeddings = " << embeddings << '\n';
  return os.str();
}

Config parse_config(std::string_view text) {
  Config c;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    try {
      c.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

void apply_environment(Config& config) {
  if (const char* s = std::getenv("LSCM_SEED"); s && *s) config.set("seed", s);
}

}  // namespace lscm
