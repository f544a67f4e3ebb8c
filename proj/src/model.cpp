#include "hcl/model.hpp"

#include "hcl/errors.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace hcl {

HclModel HclModel::create(const TrainConfig& config, Index input_dim) {
  config.validate();
  if (input_dim < 1) throw PreconditionError("model: input dimension must be >= 1");
  HclModel m;
  m.config = config;
  m.input_dim = input_dim;
  Rng rng(config.seed);
  const bool dual = config.channels == 2;
  m.encoder = make_dual_encoder(input_dim, config.hidden_dim, config.encoder_layers, dual, rng);
  const L2PoolShape shape{config.hidden_dim, config.heads, config.gcnii_layers, config.gcnii_alpha};
  for (std::size_t k = 0; k < config.pool_ratios.size(); ++k) {
    m.pools.push_back(make_l2pool_layer("pool" + std::to_string(k + 1), shape, config.pool_ratios[k], rng));
  }
  for (std::size_t k = 0; k <= config.pool_ratios.size(); ++k) {
    m.discriminators.push_back(make_discriminator("disc" + std::to_string(k) + ".W", config.hidden_dim, rng));
    if (dual) m.deltas.emplace_back("delta" + std::to_string(k), Matrix::Constant(1, 1, 1.0));
  }
  return m;
}

std::vector<Parameter*> HclModel::parameters() {
  std::vector<Parameter*> out;
  encoder.collect(out);
  for (L2PoolLayer& p : pools) p.collect(out);
  for (Discriminator& d : discriminators) out.push_back(&d.weight);
  for (Parameter& d : deltas) out.push_back(&d);
  return out;
}

void HclModel::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

void HclModel::clamp_deltas() {
  for (Parameter& d : deltas) d.value = d.value.cwiseMax(-1.0).cwiseMin(1.0);
}

// ---- checkpoint ----------------------------------------------------------------

namespace {

constexpr std::array<char, 8> kMagic{'H', 'C', 'L', 'C', 'K', 'P', 'T', '\0'};

template <typename U>
void put_le(std::ostream& out, U v) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(std::istream& in, const std::string& what) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    const int c = in.get();
    if (c == EOF) throw VersionError("checkpoint truncated while reading " + what);
    v |= static_cast<U>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const std::string& what) {
  const auto n = get_le<std::uint32_t>(in, what);
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw VersionError("checkpoint truncated while reading " + what);
  return s;
}

struct RawCheckpoint {
  std::string config_text;
  Index input_dim = 0;
  std::vector<std::pair<std::string, Matrix>> params;
};

RawCheckpoint read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw VersionError(path.string() + ": not a checkpoint (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw VersionError(path.string() + ": checkpoint version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  }
  RawCheckpoint raw;
  raw.input_dim = static_cast<Index>(get_le<std::uint64_t>(in, "input_dim"));
  raw.config_text = get_string(in, "config");
  const auto count = get_le<std::uint32_t>(in, "parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_string(in, "parameter name");
    const auto rows = static_cast<Index>(get_le<std::uint64_t>(in, name + " rows"));
    const auto cols = static_cast<Index>(get_le<std::uint64_t>(in, name + " cols"));
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r) {
      for (Index c = 0; c < cols; ++c) m(r, c) = std::bit_cast<double>(get_le<std::uint64_t>(in, name));
    }
    raw.params.emplace_back(std::move(name), std::move(m));
  }
  return raw;
}

}  // namespace

void save_checkpoint(HclModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(model.input_dim));
  put_string(out, model.config.to_text());
  const std::vector<Parameter*> params = model.parameters();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    put_string(out, p->name);
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.rows()));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.cols()));
    for (Index r = 0; r < p->value.rows(); ++r) {
      for (Index c = 0; c < p->value.cols(); ++c) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(p->value(r, c)));
    }
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

namespace {

void fill(HclModel& model, const RawCheckpoint& raw, const std::string& source) {
  const std::vector<Parameter*> params = model.parameters();
  if (params.size() != raw.params.size()) {
    throw VersionError(source + ": checkpoint has " + std::to_string(raw.params.size()) + " parameters, model has " +
                       std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, value] = raw.params[i];
    if (name != params[i]->name) {
      throw VersionError(source + ": parameter " + std::to_string(i) + " is '" + name + "', model expects '" +
                         params[i]->name + "'");
    }
    if (value.rows() != params[i]->value.rows() || value.cols() != params[i]->value.cols()) {
      throw VersionError(source + ": parameter '" + name + "' shape mismatch");
    }
    params[i]->value = value;
    params[i]->zero_grad();
  }
}

}  // namespace

HclModel load_checkpoint(const std::filesystem::path& path) {
  const RawCheckpoint raw = read_raw(path);
  HclModel model = HclModel::create(TrainConfig::parse(raw.config_text, path.string() + " (embedded config)"), raw.input_dim);
  fill(model, raw, path.string());
  return model;
}

void load_checkpoint_into(HclModel& model, const std::filesystem::path& path) {
  const RawCheckpoint raw = read_raw(path);
  if (raw.input_dim != model.input_dim) {
    throw VersionError(path.string() + ": checkpoint input dim " + std::to_string(raw.input_dim) + ", model expects " +
                       std::to_string(model.input_dim));
  }
  fill(model, raw, path.string());
}

}  // namespace hcl
