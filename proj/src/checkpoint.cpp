// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#include "cagem/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "cagem/errors.hpp"

namespace cagem {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'G', 'E', 'M', 'C', 'K', 'P'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t& pos, const std::filesystem::path& path) {
  if (pos + sizeof(T) > in.size())
    throw IntegrityError(path.string() + ": truncated archive at byte " + std::to_string(pos));
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::uint32_t crc(const char* data, std::size_t n) {
  uLong c = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    c = crc32(c, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

void copy_into(Matrix& dst, const Matrix& src, const std::string& name) {
  if (dst.rows() != src.rows() || dst.cols() != src.cols())
    throw ConfigError("checkpoint array " + name + " is " + std::to_string(src.rows()) + "x" +
                      std::to_string(src.cols()) + ", model expects " + std::to_string(dst.rows()) +
                      "x" + std::to_string(dst.cols()));
  dst = src;
}

}  // namespace

const Matrix& Archive::array(const std::string& name) const {
  for (const auto& [n, m] : arrays)
    if (n == name) return m;
  throw FormatError("checkpoint has no array '" + name + "'");
}

bool Archive::has_array(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.first == name) return true;
  return false;
}

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  nlohmann::json header;
  header["meta"] = archive.meta;
  header["arrays"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : archive.arrays) {
    header["arrays"].push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m.size()) * sizeof(double);
  }
  const std::string h = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, h.size());
  out += h;
  put<std::uint64_t>(out, offset);
  out.reserve(out.size() + offset + 4);
  for (const auto& a : archive.arrays)
    out.append(reinterpret_cast<const char*>(a.second.data()), a.second.size() * sizeof(double));
  put<std::uint32_t>(out, crc(out.data(), out.size()));

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw FormatError("cannot write checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint " + path.string());
  const std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (in.size() < sizeof kMagic || std::memcmp(in.data(), kMagic, sizeof kMagic) != 0)
    throw FormatError(path.string() + ": not a cagem checkpoint (bad magic at byte 0)");
  std::size_t pos = sizeof kMagic;
  const auto version = get<std::uint32_t>(in, pos, path);
  if (version != kCheckpointVersion)
    throw FormatError(path.string() + ": checkpoint version " + std::to_string(version) +
                      ", this build reads version " + std::to_string(kCheckpointVersion));
  if (in.size() < pos + 4) throw IntegrityError(path.string() + ": truncated archive");
  const std::size_t body = in.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, in.data() + body, 4);
  if (crc(in.data(), body) != stored) throw IntegrityError(path.string() + ": checksum mismatch");

  const auto hlen = get<std::uint64_t>(in, pos, path);
  if (pos + hlen > body) throw IntegrityError(path.string() + ": truncated header");
  const nlohmann::json header = nlohmann::json::parse(in.substr(pos, hlen));
  pos += hlen;
  const auto plen = get<std::uint64_t>(in, pos, path);
  if (pos + plen != body) throw IntegrityError(path.string() + ": payload length mismatch");
  const char* payload = in.data() + pos;

  Archive a;
  a.meta = header.at("meta");
  for (const auto& e : header.at("arrays")) {
    const Eigen::Index rows = e.at("rows"), cols = e.at("cols");
    const std::uint64_t off = e.at("offset");
    const std::uint64_t bytes = static_cast<std::uint64_t>(rows * cols) * sizeof(double);
    if (off + bytes > plen) throw IntegrityError(path.string() + ": array outside payload");
    Matrix m(rows, cols);
    std::memcpy(m.data(), payload + off, bytes);
    a.arrays.emplace_back(e.at("name").get<std::string>(), std::move(m));
  }
  return a;
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"variant", to_string(c.variant)}, {"x_dim", c.x_dim},           {"z1_dim", c.z1_dim},
          {"z2_dim", c.z2_dim},              {"clusters", c.clusters},      {"hidden", c.hidden},
          {"batch_norm", c.batch_norm},      {"skip_connection", c.skip_connection}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.variant = parse_variant(j.at("variant"));
    c.x_dim = j.at("x_dim");
    c.z1_dim = j.at("z1_dim");
    c.z2_dim = j.at("z2_dim");
    c.clusters = j.at("clusters");
    c.hidden = j.at("hidden").get<std::vector<int>>();
    c.batch_norm = j.at("batch_norm");
    c.skip_connection = j.at("skip_connection");
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model config: ") + e.what());
  }
}

void add_model(Archive& archive, const Model& model) {
  archive.meta["model"] = config_to_json(model.config());
  for (const auto& p : model.params().parameters()) archive.arrays.emplace_back("param/" + p.name, p.value);
  for (const auto& b : model.params().buffers()) archive.arrays.emplace_back("buffer/" + b.name, b.value);
}

void restore_model(const Archive& archive, Model& model) {
  if (!archive.meta.contains("model")) throw FormatError("checkpoint holds no model");
  if (config_from_json(archive.meta["model"]) != model.config())
    throw ConfigError("checkpoint model config differs from the requested one");
  for (auto& p : model.params().parameters())
    copy_into(p.value, archive.array("param/" + p.name), p.name);
  for (auto& b : model.params().buffers())
    copy_into(b.value, archive.array("buffer/" + b.name), b.name);
}

Model load_model(const Archive& archive) {
  if (!archive.meta.contains("model")) throw FormatError("checkpoint holds no model");
  Model model(config_from_json(archive.meta["model"]), 0);
  restore_model(archive, model);
  return model;
}

void add_optimizer(Archive& archive, const Adam& adam, const ParamStore& store) {
  archive.meta["adam"] = {{"steps", adam.steps()},
                          {"beta1", adam.config().beta1},
                          {"beta2", adam.config().beta2},
                          {"eps", adam.config().eps}};
  const auto& params = store.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    archive.arrays.emplace_back("adam.m/" + params[i].name, adam.first_moments().at(i));
    archive.arrays.emplace_back("adam.v/" + params[i].name, adam.second_moments().at(i));
  }
}

void restore_optimizer(const Archive& archive, Adam& adam, const ParamStore& store) {
  if (!archive.meta.contains("adam")) throw FormatError("checkpoint holds no optimizer state");
  const auto& j = archive.meta["adam"];
  adam = Adam(store, {j.at("beta1"), j.at("beta2"), j.at("eps")});
  adam.set_steps(j.at("steps"));
  const auto& params = store.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    copy_into(adam.first_moments()[i], archive.array("adam.m/" + params[i].name), params[i].name);
    copy_into(adam.second_moments()[i], archive.array("adam.v/" + params[i].name), params[i].name);
  }
}

}  // namespace cagem
