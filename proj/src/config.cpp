#include "orgtrl/config.hpp"

#include <algorithm>
#include <fstream>

namespace orgtrl {

const std::map<std::string, std::string>& Config::registry() {
  static const std::map<std::string, std::string> defaults = {
      {"data.manifest", ""},
      {"data.val_manifest", ""},
      {"data.vocab", ""},
      {"vocab.min_count", "2"},
      {"synth.videos", "20"},
      {"synth.frames", "8"},
      {"synth.objects", "4"},
      {"synth.d_a", "32"},
      {"synth.d_m", "32"},
      {"synth.d_o", "32"},
      {"synth.grammar_subjects", "5"},
      {"synth.grammar_verbs", "5"},
      {"synth.grammar_objects", "5"},
      {"synth.noise", "0.1"},
      {"org.mode", "c_org"},
      {"org.top_k", "5"},
      {"org.dim", "512"},
      {"decoder.hidden", "512"},
      {"decoder.word_dim", "300"},
      {"decoder.beam", "5"},
      {"decoder.max_len", "24"},
      {"embed.pretrained", ""},
      {"trl.k", "50"},
      {"trl.temperature", "1.5"},
      {"trl.lambda", "0.3"},
      {"trl.store", ""},
      {"elm.order", "3"},
      {"elm.alpha", "0.01"},
      {"elm.path", ""},
      {"train.lr", "3e-4"},
      {"train.batch", "128"},
      {"train.epochs", "30"},
      {"train.clip", "5.0"},
      {"train.patience", "0"},
      {"train.pairing", "per_caption"},
      {"train.resume", ""},
      {"model.checkpoint", ""},
  };
  return defaults;
}

Config::Config() : values_(registry()) {}

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void Config::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

void Config::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  it->second = value;
}

void Config::set_kv(const std::string& key_eq_value) {
  auto eq = key_eq_value.find('=');
  if (eq == std::string::npos) throw ConfigError("expected KEY=VALUE, got: " + key_eq_value);
  set(trim(key_eq_value.substr(0, eq)), trim(key_eq_value.substr(eq + 1)));
}

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  return it->second;
}

std::int64_t Config::get_int(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t pos = 0;
    const std::int64_t r = std::stoll(v, &pos);
    if (pos != v.size()) throw ConfigError("");
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " is not an integer: '" + v + "'");
  }
}

double Config::get_real(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw ConfigError("");
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " is not a number: '" + v + "'");
  }
}

std::optional<std::int64_t> Config::get_top_k(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "all" || v == "ALL") return std::nullopt;
  const std::int64_t k = get_int(key);
  if (k <= 0) throw ConfigError("config key " + key + " must be positive or 'all'");
  return k;
}

void Config::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write config file: " + path.string());
  for (const auto& [k, v] : values_) out << k << "=" << v << '\n';
}

}  // namespace orgtrl
