#include "disfluent/checkpoint.hpp"

#include "disfluent/detail/binary_io.hpp"

#include <limits>

namespace disfluent {

const Tensor<float>* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e.tensor;
  }
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  detail::ByteWriter w;
  w.bytes("DSCK");
  w.uint<std::uint32_t>(kCheckpointVersion);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(checkpoint.entries.size()));
  w.uint<std::uint32_t>(checkpoint.flags);
  for (const auto& [name, tensor] : checkpoint.entries) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw Error(Errc::InvalidConfig, "checkpoint entry name too long: " + name.substr(0, 32));
    }
    if (tensor.rank() > std::numeric_limits<std::uint8_t>::max()) {
      throw Error(Errc::InvalidConfig, "checkpoint entry rank too large: " + name);
    }
    w.uint<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(tensor.rank()));
    for (Index d : tensor.shape()) w.uint<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (Index i = 0; i < tensor.size(); ++i) w.f32(tensor.data()[i]);
  }
  w.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(Errc::MissingCheckpoint, "no checkpoint at " + path.string());
  detail::ByteReader r(path);
  if (r.bytes(4) != "DSCK") throw Error(Errc::MalformedHeader, "bad checkpoint magic in " + r.name());
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(Errc::UnsupportedFormat, "checkpoint version " + std::to_string(version) + " in " + r.name());
  }
  const auto count = r.uint<std::uint32_t>();
  Checkpoint ck;
  ck.flags = r.uint<std::uint32_t>();
  ck.entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor e;
    e.name = r.bytes(r.uint<std::uint16_t>());
    const auto rank = r.uint<std::uint8_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.uint<std::uint32_t>();
    VectorX<float> values(shape_size(shape));
    if (r.remaining() < static_cast<std::size_t>(values.size()) * 4) {
      throw Error(Errc::MalformedHeader, "truncated payload for " + e.name + " in " + r.name());
    }
    for (Index k = 0; k < values.size(); ++k) values[k] = r.f32();
    e.tensor = Tensor<float>(std::move(shape), std::move(values));
    ck.entries.push_back(std::move(e));
  }
  if (!r.at_end()) throw Error(Errc::MalformedHeader, "trailing bytes in " + r.name());
  return ck;
}

}  // namespace disfluent
