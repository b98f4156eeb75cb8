#include "agp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <stdexcept>

namespace agp {

namespace {

constexpr char kMagic[8] = {'A', 'G', 'P', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void raw(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> buf) : buf_(std::move(buf)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{buf_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{buf_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string bytes() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  void expect_magic() {
    need(sizeof(kMagic));
    if (std::memcmp(buf_.data(), kMagic, sizeof(kMagic)) != 0) throw FormatError("checkpoint: bad magic", 0);
    pos_ += sizeof(kMagic);
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw FormatError("checkpoint: truncated", buf_.size());
  }
  std::vector<unsigned char> buf_;
  std::size_t pos_ = 0;
};

nlohmann::json meta_to_json(const CheckpointMeta& meta) {
  return {{"model", std::string(to_string(meta.model))},
          {"input",
           {{"channels", meta.input.channels},
            {"height", meta.input.height},
            {"width", meta.input.width},
            {"classes", meta.input.classes}}},
          {"normalization", {{"mean", meta.normalization.mean}, {"stddev", meta.normalization.stddev}}},
          {"run", to_json(meta.run)}};
}

CheckpointMeta meta_from_json(const nlohmann::json& j) {
  CheckpointMeta meta;
  meta.model = model_from_string(j.at("model").get<std::string>());
  const auto& in = j.at("input");
  meta.input = InputSpec{in.at("channels").get<std::size_t>(), in.at("height").get<std::size_t>(),
                         in.at("width").get<std::size_t>(), in.at("classes").get<std::size_t>()};
  meta.normalization.mean = j.at("normalization").at("mean").get<std::vector<double>>();
  meta.normalization.stddev = j.at("normalization").at("stddev").get<std::vector<double>>();
  meta.run = run_config_from_json(j.at("run"));
  return meta;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, Model<float>& model, const CheckpointMeta& meta) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.u32(kCheckpointVersion);
  w.bytes(meta_to_json(meta).dump());
  auto tensors = model.params();
  for (auto& b : model.buffers()) tensors.push_back(b);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.bytes(t.name);
    w.u32(1);
    w.u64(t.value.size());
    for (const float v : t.value) w.f32(v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  Reader r(std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>{}));
  r.expect_magic();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version), r.pos() - 4);
  }
  LoadedCheckpoint out;
  out.meta = meta_from_json(nlohmann::json::parse(r.bytes()));
  out.model = std::make_unique<Model<float>>(
      out.meta.model, out.meta.input, PruneConfig{out.meta.run.p, placement_for(out.meta.model), out.meta.run.seed}, 0);

  std::map<std::string, ParamRef<float>> slots;
  for (auto& p : out.model->params()) slots.emplace(p.name, p);
  for (auto& b : out.model->buffers()) slots.emplace(b.name, b);

  const std::uint32_t count = r.u32();
  std::size_t filled = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.pos();
    const std::string name = r.bytes();
    const std::uint32_t rank = r.u32();
    std::uint64_t elements = 1;
    for (std::uint32_t d = 0; d < rank; ++d) elements *= r.u64();
    const auto it = slots.find(name);
    if (it == slots.end()) throw FormatError("checkpoint: unexpected tensor '" + name + "'", at);
    if (it->second.value.size() != elements) throw FormatError("checkpoint: size mismatch for '" + name + "'", at);
    for (auto& v : it->second.value) v = r.f32();
    ++filled;
  }
  if (filled != slots.size()) throw FormatError("checkpoint: missing tensors", r.pos());
  return out;
}

}  // namespace agp
