#include "hcl/config.hpp"

#include "hcl/errors.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace hcl {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string real_text(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("config: '" + key + "' expects a real number, got '" + v + "'");
}

Index parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long d = std::stoll(v, &used);
    if (used == v.size()) return static_cast<Index>(d);
  } catch (const std::exception&) {
  }
  throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: '" + key + "' expects true|false, got '" + v + "'");
}

}  // namespace

void TrainConfig::validate() const {
  if (hidden_dim < 1) throw ConfigError("config: hidden_dim must be >= 1");
  if (heads < 1 || hidden_dim % heads != 0) throw ConfigError("config: hidden_dim must be a positive multiple of heads");
  if (gcnii_layers < 1) throw ConfigError("config: gcnii_layers must be >= 1");
  if (!(gcnii_alpha >= 0.0 && gcnii_alpha <= 1.0)) throw ConfigError("config: gcnii_alpha must lie in [0, 1]");
  if (encoder_layers < 1) throw ConfigError("config: encoder_layers must be >= 1");
  if (channels != 1 && channels != 2) throw ConfigError("config: channels must be 1 or 2");
  for (double r : pool_ratios) {
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError("config: every pool ratio must lie in (0, 1], got " + real_text(r));
  }
  if (!(lr >= 0.0)) throw ConfigError("config: lr must be >= 0");
  if (max_epochs < 0) throw ConfigError("config: max_epochs must be >= 0");
  if (patience < 1) throw ConfigError("config: patience must be >= 1");
  if (!(teleport > 0.0 && teleport < 1.0)) throw ConfigError("config: teleport must lie in (0, 1)");
  if (top_t < 1) throw ConfigError("config: top_t must be >= 1");
  if (embed_fusion == EmbedFusion::concat && channels != 2) throw ConfigError("config: embed_fusion = concat needs 2 channels");
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "hidden_dim") hidden_dim = parse_int(key, value);
  else if (key == "pool_ratios") {
    pool_ratios.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) pool_ratios.push_back(parse_real(key, item));
    }
  } else if (key == "heads") heads = parse_int(key, value);
  else if (key == "gcnii_layers") gcnii_layers = parse_int(key, value);
  else if (key == "gcnii_alpha") gcnii_alpha = parse_real(key, value);
  else if (key == "encoder_layers") encoder_layers = parse_int(key, value);
  else if (key == "channels") channels = parse_int(key, value);
  else if (key == "lr") lr = parse_real(key, value);
  else if (key == "max_epochs") max_epochs = parse_int(key, value);
  else if (key == "patience") patience = parse_int(key, value);
  else if (key == "input_mode") {
    if (value == "adjacency") input_mode = InputMode::adjacency;
    else if (value == "diffusion") input_mode = InputMode::diffusion;
    else throw ConfigError("config: input_mode must be adjacency|diffusion, got '" + value + "'");
  } else if (key == "teleport") teleport = parse_real(key, value);
  else if (key == "top_t") top_t = parse_int(key, value);
  else if (key == "seed") {
    const Index s = parse_int(key, value);
    if (s < 0) throw ConfigError("config: seed must be >= 0");
    seed = static_cast<std::uint64_t>(s);
  } else if (key == "loss_reduction") {
    if (value == "mean") loss_reduction = LossReduction::mean;
    else if (value == "sum") loss_reduction = LossReduction::sum;
    else throw ConfigError("config: loss_reduction must be mean|sum, got '" + value + "'");
  } else if (key == "adjacency_closure") adjacency_closure = parse_bool(key, value);
  else if (key == "pool_gate") pool_gate = parse_bool(key, value);
  else if (key == "row_normalize_features") row_normalize_features = parse_bool(key, value);
  else if (key == "embed_fusion") {
    if (value == "mix") embed_fusion = EmbedFusion::mix;
    else if (value == "concat") embed_fusion = EmbedFusion::concat;
    else throw ConfigError("config: embed_fusion must be mix|concat, got '" + value + "'");
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

TrainConfig TrainConfig::parse(std::string_view text, const std::string& source) {
  TrainConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    try {
      c.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "hidden_dim = " << hidden_dim << '\n';
  os << "pool_ratios = ";
  for (std::size_t i = 0; i < pool_ratios.size(); ++i) os << (i ? "," : "") << real_text(pool_ratios[i]);
  os << '\n';
  os << "heads = " << heads << '\n';
  os << "gcnii_layers = " << gcnii_layers << '\n';
  os << "gcnii_alpha = " << real_text(gcnii_alpha) << '\n';
  os << "encoder_layers = " << encoder_layers << '\n';
  os << "channels = " << channels << '\n';
  os << "lr = " << real_text(lr) << '\n';
  os << "max_epochs = " << max_epochs << '\n';
  os << "patience = " << patience << '\n';
  os << "input_mode = " << (input_mode == InputMode::adjacency ? "adjacency" : "diffusion") << '\n';
  os << "teleport = " << real_text(teleport) << '\n';
  os << "top_t = " << top_t << '\n';
  os << "seed = " << seed << '\n';
  os << "loss_reduction = " << (loss_reduction == LossReduction::mean ? "mean" : "sum") << '\n';
  os << "adjacency_closure = " << (adjacency_closure ? "true" : "false") << '\n';
  os << "pool_gate = " << (pool_gate ? "true" : "false") << '\n';
  os << "row_normalize_features = " << (row_normalize_features ? "true" : "false") << '\n';
  os << "embed_fusion = " << (embed_fusion == EmbedFusion::mix ? "mix" : "concat") << '\n';
  return os.str();
}

void TrainConfig::truncate_scales(Index scales) {
  if (scales < 1) throw ConfigError("scales must be >= 1");
  if (scales - 1 > static_cast<Index>(pool_ratios.size())) {
    throw ConfigError("scales = " + std::to_string(scales) + " exceeds the " + std::to_string(pool_ratios.size() + 1) +
                      " scales the pool_ratios schedule provides");
  }
  pool_ratios.resize(static_cast<std::size_t>(scales - 1));
}

std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return content_hash(ss.str());
}

}  // namespace hcl
