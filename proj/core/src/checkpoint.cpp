#include "derl/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "derl/errors.hpp"

namespace derl::ckpt {

namespace {

constexpr char kMagic[8] = {'D', 'E', 'R', 'L', 'N', 'E', 'T', '1'};

template <typename T>
void put(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T take(std::ifstream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw DataError("checkpoint: truncated file");
  return value;
}

std::uint32_t activation_code(nn::Activation a) {
  switch (a) {
    case nn::Activation::Relu: return 0;
    case nn::Activation::Linear: return 1;
    case nn::Activation::Tanh: return 2;
  }
  return 1;
}

nn::Activation activation_from_code(std::uint32_t c) {
  switch (c) {
    case 0: return nn::Activation::Relu;
    case 1: return nn::Activation::Linear;
    case 2: return nn::Activation::Tanh;
  }
  throw DataError("checkpoint: unknown activation code");
}

}  // namespace

const nn::DenseNet& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, net] : networks)
    if (n == name) return net;
  throw DataError("checkpoint: missing network '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, net] : networks)
    if (n == name) return true;
  return false;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  put<std::uint64_t>(out, ckpt.step);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.networks.size()));
  for (const auto& [name, net] : ckpt.networks) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(out, net.seed);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers.size()));
    for (const auto& l : net.layers) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(l.weight.rows()));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(l.weight.cols()));
      put<std::uint32_t>(out, activation_code(l.activation));
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c)
          put<double>(out, l.weight(r, c));
      for (Eigen::Index i = 0; i < l.bias.size(); ++i)
        put<double>(out, l.bias[i]);
    }
  }
  if (!out) throw DataError("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("checkpoint: bad magic in " + path);

  Checkpoint ckpt;
  ckpt.step = take<std::uint64_t>(in);
  const auto count = take<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = take<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw DataError("checkpoint: truncated name");
    nn::DenseNet net;
    net.seed = take<std::uint64_t>(in);
    const auto n_layers = take<std::uint32_t>(in);
    for (std::uint32_t j = 0; j < n_layers; ++j) {
      const auto rows = take<std::uint32_t>(in);
      const auto cols = take<std::uint32_t>(in);
      const auto act = take<std::uint32_t>(in);
      nn::Layer l;
      l.activation = activation_from_code(act);
      l.weight.resize(rows, cols);
      for (std::uint32_t r = 0; r < rows; ++r)
        for (std::uint32_t c = 0; c < cols; ++c)
          l.weight(r, c) = take<double>(in);
      l.bias.resize(rows);
      for (std::uint32_t r = 0; r < rows; ++r) l.bias[r] = take<double>(in);
      net.layers.push_back(std::move(l));
    }
    net.validate();
    ckpt.networks.emplace_back(std::move(name), std::move(net));
  }
  return ckpt;
}

}  // namespace derl::ckpt
