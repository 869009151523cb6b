#pragma once

// Checkpoint file:
//   "HUPACKPT" | version u16 | tensor count u32 |
//   per tensor: name length u16, UTF-8 name, rank u8, dims u32 x rank,
//               little-endian f32 data.

#include <string>
#include <vector>

#include "hupa/binary_io.hpp"
#include "hupa/tensor.hpp"

namespace hupa::nn {

inline constexpr std::string_view kCheckpointMagic = "HUPACKPT";
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

inline std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  ByteWriter w;
  w.put_bytes(kCheckpointMagic);
  w.put<std::uint16_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xffff) throw std::invalid_argument("checkpoint: tensor name too long");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.put_bytes(name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (int d : t.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (float v : t.vec()) w.put<float>(v);
  }
  return std::move(w.bytes());
}

inline std::vector<NamedTensor> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.remaining() < kCheckpointMagic.size() || r.get_string(kCheckpointMagic.size()) != kCheckpointMagic)
    throw FormatError(FormatError::Kind::bad_magic, "not a checkpoint file");
  const auto version = r.get<std::uint16_t>();
  if (version != kCheckpointVersion)
    throw FormatError(FormatError::Kind::bad_version, "unsupported checkpoint version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    nt.name = r.get_string(r.get<std::uint16_t>());
    const int rank = r.get<std::uint8_t>();
    std::vector<int> shape;
    for (int k = 0; k < rank; ++k) shape.push_back(static_cast<int>(r.get<std::uint32_t>()));
    std::vector<float> data(Tensor<float>::count(shape));
    for (float& v : data) v = r.get<float>();
    nt.tensor = Tensor<float>(std::move(shape), std::move(data));
    out.push_back(std::move(nt));
  }
  if (r.remaining() != 0) throw FormatError(FormatError::Kind::corrupt, "trailing bytes after checkpoint");
  return out;
}

inline void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  write_file_bytes(path, encode_checkpoint(tensors));
}

inline std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  return decode_checkpoint(read_file_bytes(path));
}

template <class T>
std::vector<NamedTensor> to_named_tensors(const ParamSet<T>& ps) {
  std::vector<NamedTensor> out;
  for (const auto& p : ps) out.push_back({p.name, p.value.template cast<float>()});
  return out;
}

/// Copies tensors into an existing layout; names and shapes must match exactly.
template <class T>
void assign_named_tensors(ParamSet<T>& ps, const std::vector<NamedTensor>& tensors) {
  if (static_cast<int>(tensors.size()) != ps.count())
    throw FormatError(FormatError::Kind::invalid, "checkpoint tensor count does not match the model");
  for (int i = 0; i < ps.count(); ++i) {
    const auto& nt = tensors[static_cast<std::size_t>(i)];
    if (nt.name != ps[i].name || nt.tensor.shape() != ps[i].value.shape())
      throw FormatError(FormatError::Kind::invalid, "checkpoint tensor " + nt.name + " does not match model layout");
    ps[i].value = nt.tensor.template cast<T>();
  }
}

}  // namespace hupa::nn
