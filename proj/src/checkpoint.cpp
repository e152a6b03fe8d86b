#include "stepcount/checkpoint.h"

#include <cstring>

#include "stepcount/errors.h"
#include "stepcount/util.h"

namespace stepcount {

namespace {

constexpr char kMagic[4] = {'S', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename V>
void put(std::vector<std::uint8_t>& out, V v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(V));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}
  template <typename V>
  V get() {
    need(sizeof(V));
    V v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void read_floats(float* dst, std::size_t n) {
    need(n * sizeof(float));
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError("checkpoint truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const CnnRegressor& model, std::uint32_t epoch) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put(out, kVersion);
  const std::string_view id = CnnRegressor::kArchitectureId;
  put(out, static_cast<std::uint32_t>(id.size()));
  out.insert(out.end(), id.begin(), id.end());
  put(out, model.feature_hash());
  put(out, epoch);
  put(out, model.label_mean());
  put(out, model.label_scale());
  const auto& params = model.parameters();
  put(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) put(out, static_cast<std::uint32_t>(d));
  }
  for (const auto& p : params) {
    const auto* raw = reinterpret_cast<const std::uint8_t*>(p.value.data());
    out.insert(out.end(), raw, raw + p.value.size() * sizeof(float));
  }
  return out;
}

CnnRegressor decode_checkpoint(const std::vector<std::uint8_t>& bytes, CheckpointInfo* info) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a checkpoint file");
  }
  r.get_string(4);
  if (r.get<std::uint32_t>() != kVersion) throw FormatError("unsupported checkpoint version");
  const std::string id = r.get_string(r.get<std::uint32_t>());
  if (id != CnnRegressor::kArchitectureId) {
    throw FormatError("checkpoint architecture '" + id + "' does not match '" +
                      std::string(CnnRegressor::kArchitectureId) + "'");
  }
  CheckpointInfo meta;
  meta.architecture_id = id;
  meta.feature_hash = r.get<std::uint64_t>();
  meta.epoch = r.get<std::uint32_t>();
  const double mean = r.get<double>();
  const double scale = r.get<double>();

  CnnRegressor model;
  auto& params = model.parameters();
  const auto count = r.get<std::uint32_t>();
  if (count != params.size()) throw FormatError("checkpoint parameter count mismatch");
  for (auto& p : params) {
    const auto rank = r.get<std::uint32_t>();
    nn::Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(r.get<std::uint32_t>());
    if (shape != p.value.shape()) {
      throw FormatError("checkpoint shape " + nn::shape_string(shape) + " for '" + p.name +
                        "' does not match " + nn::shape_string(p.value.shape()));
    }
  }
  for (auto& p : params) r.read_floats(p.value.data(), p.value.size());
  if (!r.done()) throw FormatError("trailing bytes after checkpoint payload");
  model.set_label_normalization(mean, scale);
  model.set_feature_hash(meta.feature_hash);
  if (info != nullptr) *info = meta;
  return model;
}

void save_checkpoint(const CnnRegressor& model, std::uint32_t epoch, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model, epoch);
  write_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

CnnRegressor load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info) {
  const std::string raw = read_file(path);
  std::vector<std::uint8_t> bytes(raw.begin(), raw.end());
  try {
    return decode_checkpoint(bytes, info);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace stepcount
