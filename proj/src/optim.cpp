#include "cadnerf/optim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "cadnerf/errors.hpp"

namespace cadnerf::ad {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian hosts");

void Adam::add(const std::string& name, Tensor param, const std::string& group) {
  if (!param.requires_grad()) fail(ErrorKind::Optimizer, "parameter '" + name + "' does not require grad");
  for (const auto& s : slots_) {
    if (s.name == name) fail(ErrorKind::Optimizer, "duplicate parameter '" + name + "'");
  }
  Slot slot{name, group, param, Matrix::Zero(param.rows(), param.cols()), Matrix::Zero(param.rows(), param.cols()), 0};
  slots_.push_back(std::move(slot));
}

void Adam::zero_grad() {
  for (auto& s : slots_) s.param.zero_grad();
}

void Adam::step(const std::vector<std::string>& groups) {
  ++steps_;
  for (auto& s : slots_) {
    if (!groups.empty() && std::find(groups.begin(), groups.end(), s.group) == groups.end()) continue;
    const Matrix& g = s.param.grad();
    if (g.rows() != s.param.rows() || g.cols() != s.param.cols()) {
      fail(ErrorKind::Optimizer, "parameter '" + s.name + "' has no gradient");
    }
    ++s.t;
    s.m = config_.beta1 * s.m + (1.0 - config_.beta1) * g;
    s.v = config_.beta2 * s.v + (1.0 - config_.beta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(s.t));
    auto& value = s.param.mutable_value();
    value.array() -= config_.learning_rate * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + config_.epsilon);
  }
}

namespace {
constexpr char kMagic[8] = {'C', 'N', 'R', 'F', 'C', 'K', 'P', '1'};
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  nlohmann::json header;
  header["step"] = checkpoint.step;
  header["dtype"] = "float64";
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : checkpoint.tensors) {
    header["tensors"].push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m.size());
  }
  const std::string text = header.dump();
  const std::uint64_t len = text.size();
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp);
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, m] : checkpoint.tensors) {
      out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    }
    if (!out) fail(ErrorKind::Io, "short write on " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) fail(ErrorKind::Format, path.string() + ": not a checkpoint");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(text);
    if (header.at("dtype") != "float64") fail(ErrorKind::Format, path.string() + ": unsupported dtype");
    ck.step = header.at("step").get<std::int64_t>();
    for (const auto& t : header.at("tensors")) {
      const auto shape = t.at("shape").get<std::vector<Eigen::Index>>();
      Matrix m(shape.at(0), shape.at(1));
      in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
      ck.tensors[t.at("name").get<std::string>()] = std::move(m);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": " + e.what());
  }
  if (!in) fail(ErrorKind::Format, path.string() + ": truncated payload");
  return ck;
}

void export_optimizer(const Adam& optimizer, Checkpoint& checkpoint) {
  checkpoint.step = optimizer.steps();
  for (const auto& s : optimizer.slots()) {
    checkpoint.tensors["param/" + s.name] = s.param.value();
    checkpoint.tensors["adam.m/" + s.name] = s.m;
    checkpoint.tensors["adam.v/" + s.name] = s.v;
    checkpoint.tensors["adam.t/" + s.name] = Matrix::Constant(1, 1, static_cast<double>(s.t));
  }
}

void import_optimizer(Adam& optimizer, const Checkpoint& checkpoint) {
  for (auto& s : optimizer.slots()) {
    const auto it = checkpoint.tensors.find("param/" + s.name);
    if (it == checkpoint.tensors.end()) fail(ErrorKind::Format, "checkpoint lacks parameter '" + s.name + "'");
    if (it->second.rows() != s.param.rows() || it->second.cols() != s.param.cols()) {
      fail(ErrorKind::Dimension, "checkpoint shape mismatch for '" + s.name + "'");
    }
    s.param.mutable_value() = it->second;
    if (auto m = checkpoint.tensors.find("adam.m/" + s.name); m != checkpoint.tensors.end()) s.m = m->second;
    if (auto v = checkpoint.tensors.find("adam.v/" + s.name); v != checkpoint.tensors.end()) s.v = v->second;
    if (auto t = checkpoint.tensors.find("adam.t/" + s.name); t != checkpoint.tensors.end()) {
      s.t = static_cast<std::int64_t>(t->second(0, 0));
    }
  }
  optimizer.set_steps(checkpoint.step);
}

}  // namespace cadnerf::ad
