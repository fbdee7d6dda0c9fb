#include "dated/train/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "dated/common/error.hpp"
#include "dated/common/hash.hpp"

namespace dated::train {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'D', 'A', 'T', 'E', 'D', 'C', 'K', 'P'};

Json meta_to_json(const CheckpointMeta& m) {
  return {{"config", m.config.to_json()},
          {"step", m.step},
          {"cutoff_year", m.cutoff_year},
          {"tokenizer_fingerprint", m.tokenizer_fingerprint},
          {"stage", stage_name(m.stage)},
          {"training", m.training}};
}

CheckpointMeta meta_from_json(const Json& j) {
  CheckpointMeta m;
  m.config = lm::ModelConfig::from_json(j.at("config"));
  m.step = j.at("step").get<int64_t>();
  m.cutoff_year = j.at("cutoff_year").get<int>();
  m.tokenizer_fingerprint = j.at("tokenizer_fingerprint").get<std::string>();
  const auto stage = parse_stage(j.at("stage").get<std::string>());
  if (!stage) throw CorruptionError("unknown checkpoint stage");
  m.stage = *stage;
  m.training = j.value("training", Json::object());
  return m;
}

template <typename T>
void put(std::string& out, const T& value) {
  out.append(reinterpret_cast<const char*>(&value), sizeof(T));
}

void put_floats(std::string& out, const std::vector<float>& v) {
  out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::filesystem::path& path)
      : bytes_(bytes), path_(path) {}

  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)), sizeof(T));
    return value;
  }
  std::vector<float> floats(uint64_t n) {
    if (n > (bytes_.size() - pos_) / sizeof(float)) truncated();
    std::vector<float> v(n);
    std::memcpy(v.data(), take(n * sizeof(float)), n * sizeof(float));
    return v;
  }
  const char* take(size_t n) {
    if (n > bytes_.size() - pos_) truncated();
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  size_t pos() const { return pos_; }

 private:
  [[noreturn]] void truncated() {
    throw CorruptionError("checkpoint " + path_.string() + " is truncated");
  }
  const std::string& bytes_;
  const std::filesystem::path& path_;
  size_t pos_ = 0;
};

}  // namespace

std::string_view stage_name(Stage stage) {
  return stage == Stage::kBase ? "base" : "instruct";
}

std::optional<Stage> parse_stage(std::string_view name) {
  if (name == "base") return Stage::kBase;
  if (name == "instruct") return Stage::kInstruct;
  return std::nullopt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string meta = meta_to_json(ckpt.meta).dump();
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put(out, kCheckpointVersion);
  put(out, static_cast<uint32_t>(meta.size()));
  out += meta;
  put(out, static_cast<uint64_t>(ckpt.params.values.size()));
  put_floats(out, ckpt.params.values);
  put(out, static_cast<uint8_t>(ckpt.optimizer.has_value()));
  if (ckpt.optimizer) {
    put(out, ckpt.optimizer->step);
    put_floats(out, ckpt.optimizer->m);
    put_floats(out, ckpt.optimizer->v);
  }
  const auto digest = sha256(out);
  out.append(reinterpret_cast<const char*>(digest.data()), digest.size());
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, bool load_optimizer) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const IoError&) {
    throw IoError("cannot read checkpoint " + path.string());
  }
  Reader r(bytes, path);
  if (std::memcmp(r.take(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0) {
    throw CorruptionError(path.string() + " is not a checkpoint (bad magic)");
  }
  const auto version = r.get<uint32_t>();
  if (version != kCheckpointVersion) {
    throw InvalidArgument("checkpoint " + path.string() + " has format version " +
                          std::to_string(version) + "; this build reads version " +
                          std::to_string(kCheckpointVersion));
  }
  if (bytes.size() < 32) throw CorruptionError("checkpoint " + path.string() + " is truncated");
  const std::string_view body(bytes.data(), bytes.size() - 32);
  const auto digest = sha256(body);
  if (std::memcmp(digest.data(), bytes.data() + body.size(), 32) != 0) {
    throw CorruptionError("checkpoint " + path.string() +
                          " failed its checksum (truncated or modified)");
  }

  Checkpoint ckpt;
  const auto meta_len = r.get<uint32_t>();
  try {
    ckpt.meta = meta_from_json(Json::parse(std::string_view(r.take(meta_len), meta_len)));
  } catch (const Json::exception& e) {
    throw CorruptionError("checkpoint " + path.string() + " metadata: " + e.what());
  }
  ckpt.meta.config.validate();
  const auto n = r.get<uint64_t>();
  if (n != lm::ParameterLayout(ckpt.meta.config).total()) {
    throw CorruptionError("checkpoint " + path.string() +
                          " parameter count disagrees with its config");
  }
  ckpt.params.config = ckpt.meta.config;
  ckpt.params.values = r.floats(n);
  const bool has_opt = r.get<uint8_t>() != 0;
  if (has_opt) {
    OptimizerState s;
    s.step = r.get<int64_t>();
    s.m = r.floats(n);
    s.v = r.floats(n);
    if (load_optimizer) {
      ckpt.optimizer = std::move(s);
    } else {
      ckpt.optimizer_dropped = true;
    }
  }
  if (r.pos() != body.size()) {
    throw CorruptionError("checkpoint " + path.string() + " has trailing bytes");
  }
  return ckpt;
}

std::string checkpoint_digest(const Checkpoint& ckpt) {
  Sha256 h;
  h.update(meta_to_json(ckpt.meta).dump());
  auto floats = [&](const std::vector<float>& v) {
    h.update(std::span(reinterpret_cast<const uint8_t*>(v.data()),
                       v.size() * sizeof(float)));
  };
  floats(ckpt.params.values);
  if (ckpt.optimizer) {
    h.update(std::to_string(ckpt.optimizer->step));
    floats(ckpt.optimizer->m);
    floats(ckpt.optimizer->v);
  }
  const auto d = h.finish();
  return to_hex(d);
}

}  // namespace dated::train
