// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#include "inv3d/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace inv3d {
namespace {

constexpr char kMagic[8] = {'I', '3', 'D', 'S', 'T', 'O', 'R', 'E'};

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat64: return "f64";
    case torch::kFloat32: return "f32";
    case torch::kInt64: return "i64";
    case torch::kUInt8: return "u8";
    case torch::kBool: return "b8";
    default:
      throw CheckpointError("unsupported tensor dtype in store");
  }
}

torch::ScalarType dtype_from_name(const std::string& name) {
  if (name == "f64") return torch::kFloat64;
  if (name == "f32") return torch::kFloat32;
  if (name == "i64") return torch::kInt64;
  if (name == "u8") return torch::kUInt8;
  if (name == "b8") return torch::kBool;
  throw CheckpointError("unknown tensor dtype tag: " + name);
}

}  // namespace

bool TensorStore::contains(const std::string& name) const {
  for (const auto& [k, v] : tensors) {
    if (k == name) return true;
  }
  return false;
}

const torch::Tensor& TensorStore::at(const std::string& name) const {
  for (const auto& [k, v] : tensors) {
    if (k == name) return v;
  }
  throw CheckpointError("tensor not found in store: " + name);
}

void TensorStore::put(const std::string& name, const torch::Tensor& t) {
  for (auto& [k, v] : tensors) {
    if (k == name) {
      v = t;
      return;
    }
  }
  tensors.emplace_back(name, t);
}

void save_store(const std::filesystem::path& path, const TensorStore& store) {
  nlohmann::json header;
  header["meta"] = store.meta;
  auto entries = nlohmann::json::array();

  std::vector<torch::Tensor> flat;
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : store.tensors) {
    auto c = tensor.detach().contiguous().cpu();
    const std::uint64_t nbytes = static_cast<std::uint64_t>(c.numel()) * c.element_size();
    nlohmann::json e;
    e["name"] = name;
    e["dtype"] = dtype_name(c.scalar_type());
    e["shape"] = std::vector<std::int64_t>(c.sizes().begin(), c.sizes().end());
    e["offset"] = offset;
    e["nbytes"] = nbytes;
    entries.push_back(e);
    flat.push_back(c);
    offset += nbytes;
  }
  header["tensors"] = entries;
  const std::string header_str = header.dump();

  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw CheckpointError("cannot open for writing: " + path.string());
  }
  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t version = kStoreFormatVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t header_len = header_str.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& t : flat) {
    out.write(static_cast<const char*>(t.data_ptr()),
              static_cast<std::streamsize>(t.numel() * t.element_size()));
  }
  if (!out) {
    throw CheckpointError("short write: " + path.string());
  }
}

TensorStore load_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CheckpointError("cannot open: " + path.string());
  }
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a tensor store (bad magic): " + path.string());
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || version != kStoreFormatVersion) {
    throw CheckpointError("unsupported store version " + std::to_string(version) + " (expected " +
                          std::to_string(kStoreFormatVersion) + "): " + path.string());
  }
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in || header_len == 0 || header_len > (1ull << 30)) {
    throw CheckpointError("corrupt header length: " + path.string());
  }
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) {
    throw CheckpointError("truncated header: " + path.string());
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt header json: ") + e.what());
  }

  TensorStore store;
  store.meta = header.value("meta", nlohmann::json::object());
  for (const auto& e : header.at("tensors")) {
    const auto name = e.at("name").get<std::string>();
    const auto dtype = dtype_from_name(e.at("dtype").get<std::string>());
    const auto shape = e.at("shape").get<std::vector<std::int64_t>>();
    const auto nbytes = e.at("nbytes").get<std::uint64_t>();
    auto t = torch::empty(shape, torch::dtype(dtype));
    if (static_cast<std::uint64_t>(t.numel()) * t.element_size() != nbytes) {
      throw CheckpointError("tensor size mismatch for " + name);
    }
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
    if (!in) {
      throw CheckpointError("truncated payload at tensor " + name + ": " + path.string());
    }
    store.tensors.emplace_back(name, t);
  }
  return store;
}

void store_module(TensorStore& store, const std::string& prefix, const torch::nn::Module& module) {
  for (const auto& p : module.named_parameters(/*recurse=*/true)) {
    store.put(prefix + "." + p.key(), p.value().detach().clone());
  }
  for (const auto& b : module.named_buffers(/*recurse=*/true)) {
    store.put(prefix + "." + b.key(), b.value().detach().clone());
  }
}

void load_module(const TensorStore& store, const std::string& prefix, torch::nn::Module& module) {
  torch::NoGradGuard guard;
  auto copy_into = [&](const std::string& key, torch::Tensor dest) {
    const std::string full = prefix + "." + key;
    if (!store.contains(full)) {
      throw CheckpointError("missing tensor in store: " + full);
    }
    const auto& src = store.at(full);
    if (src.sizes() != dest.sizes()) {
      std::ostringstream os;
      os << "shape mismatch for " << full << ": store " << src.sizes() << " vs module "
         << dest.sizes();
      throw CheckpointError(os.str());
    }
    dest.copy_(src.to(dest.scalar_type()));
  };
  for (const auto& p : module.named_parameters(/*recurse=*/true)) {
    copy_into(p.key(), p.value());
  }
  for (const auto& b : module.named_buffers(/*recurse=*/true)) {
    copy_into(b.key(), b.value());
  }
}

}  // namespace inv3d
