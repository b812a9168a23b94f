#include "travbev/checkpoint.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "travbev/errors.hpp"

namespace travbev {

namespace {

constexpr char kMagic[8] = {'T', 'R', 'A', 'V', 'B', 'E', 'V', '1'};

std::uint32_t crc_of(const std::vector<char>& bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()),
            static_cast<uInt>(bytes.size())));
}

void append_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
}

std::uint32_t read_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i]))
         << (8 * i);
  }
  return v;
}

}  // namespace

Checkpoint Checkpoint::from_net(const FeatureNet& net, nlohmann::json extra) {
  Checkpoint ckpt;
  ckpt.arch = net.arch();
  ckpt.parameters = net.parameters();
  ckpt.extra = std::move(extra);
  return ckpt;
}

FeatureNet Checkpoint::to_net() const {
  FeatureNet net(arch);
  net.set_parameters(parameters);
  return net;
}

void save_checkpoint(const std::filesystem::path& path,
                     const Checkpoint& ckpt) {
  if (ckpt.parameters.size() != arch_param_count(ckpt.arch)) {
    throw CheckpointError("parameter block does not match the architecture");
  }
  nlohmann::json meta = arch_to_json(ckpt.arch);
  if (!ckpt.extra.is_null()) {
    meta["extra"] = ckpt.extra;
  }
  const std::string meta_text = meta.dump();
  if (meta_text.size() > 0xFFFFFFFFull) {
    throw CheckpointError("metadata too large");
  }

  std::vector<char> bytes;
  bytes.insert(bytes.end(), kMagic, kMagic + sizeof(kMagic));
  append_u32(bytes, static_cast<std::uint32_t>(meta_text.size()));
  bytes.insert(bytes.end(), meta_text.begin(), meta_text.end());
  const char* p = reinterpret_cast<const char*>(ckpt.parameters.data());
  bytes.insert(bytes.end(), p, p + ckpt.parameters.size() * sizeof(float));
  append_u32(bytes, crc_of(bytes));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open for writing: " + path.string());
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open: " + path.string());
  }
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());

  if (bytes.size() < sizeof(kMagic) + 4 + 4) {
    throw CheckpointError("truncated model file: " + path.string());
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("bad magic in model file: " + path.string());
  }
  const std::uint32_t stored_crc = read_u32(bytes.data() + bytes.size() - 4);
  std::vector<char> body(bytes.begin(), bytes.end() - 4);
  if (crc_of(body) != stored_crc) {
    throw CheckpointError("checksum mismatch in model file: " + path.string());
  }

  const std::size_t meta_len = read_u32(bytes.data() + sizeof(kMagic));
  const std::size_t header = sizeof(kMagic) + 4;
  if (header + meta_len + 4 > bytes.size()) {
    throw CheckpointError("truncated model file: " + path.string());
  }
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(bytes.begin() + header,
                                 bytes.begin() + header + meta_len);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("model metadata is not valid: ") +
                          e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.arch = arch_from_json(meta);
  } catch (const Error& e) {
    throw CheckpointError(e.what());
  }
  ckpt.extra = meta.contains("extra") ? meta["extra"] : nlohmann::json();

  const std::size_t param_bytes = bytes.size() - header - meta_len - 4;
  if (param_bytes % sizeof(float) != 0) {
    throw CheckpointError("parameter block is not float aligned: " +
                          path.string());
  }
  const std::size_t n_params = param_bytes / sizeof(float);
  if (n_params != arch_param_count(ckpt.arch)) {
    throw CheckpointError("parameter count does not match the architecture: " +
                          path.string());
  }
  ckpt.parameters.resize(n_params);
  std::memcpy(ckpt.parameters.data(), bytes.data() + header + meta_len,
              param_bytes);
  for (const float v : ckpt.parameters) {
    if (!std::isfinite(v)) {
      throw CheckpointError("non-finite parameter in model file: " +
                            path.string());
    }
  }
  return ckpt;
}

}  // namespace travbev
