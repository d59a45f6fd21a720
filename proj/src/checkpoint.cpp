#include "tpcap/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace tpcap {

void save_checkpoint(const std::string& dir, const ParameterRegistry& reg,
                     const json& config_snapshot,
                     const std::string& config_hash_value, uint64_t seed,
                     const json& metrics, const Tokenizer* vocab) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory: " + dir);

  std::vector<unsigned char> blob;
  json tensors = json::array();
  for (const auto& p : reg.entries()) {
    if (!p->materialized) {
      throw ConfigError("save_checkpoint: parameter not materialized: " +
                        p->name);
    }
    json t;
    t["name"] = p->name;
    t["shape"] = p->shape;
    t["offset_bytes"] = blob.size();
    t["numel"] = p->numel();
    tensors.push_back(t);
    auto bytes = f32_bytes(p->value);
    blob.insert(blob.end(), bytes.begin(), bytes.end());
  }

  json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["config"] = config_snapshot;
  manifest["config_hash"] = config_hash_value;
  manifest["seed"] = seed;
  manifest["frozen_names"] = reg.frozen_names();
  manifest["metrics"] = metrics;
  manifest["checksum"] = hex64(fnv1a64(blob.data(), blob.size()));
  manifest["tensors"] = tensors;

  {
    std::ofstream f(fs::path(dir) / "weights.bin", std::ios::binary);
    if (!f) throw IoError("cannot write weights.bin under " + dir);
    f.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size()));
    if (!f) throw IoError("short write of weights.bin under " + dir);
  }
  {
    std::ofstream f(fs::path(dir) / "manifest.json");
    if (!f) throw IoError("cannot write manifest.json under " + dir);
    f << manifest.dump(2) << "\n";
  }
  if (vocab) {
    vocab->save((fs::path(dir) / "vocab.json").string());
  }
}

CheckpointData load_checkpoint(const std::string& dir) {
  CheckpointData out;
  {
    std::ifstream f(fs::path(dir) / "manifest.json");
    if (!f) throw IoError("cannot open manifest.json under " + dir);
    try {
      f >> out.manifest;
    } catch (const std::exception& e) {
      throw CorruptionError(std::string("manifest parse failure: ") + e.what());
    }
  }
  if (!out.manifest.contains("format_version") ||
      out.manifest["format_version"].get<int>() != kCheckpointFormatVersion) {
    throw CorruptionError("unsupported checkpoint format version in " + dir);
  }
  std::vector<unsigned char> blob;
  {
    std::ifstream f(fs::path(dir) / "weights.bin", std::ios::binary);
    if (!f) throw IoError("cannot open weights.bin under " + dir);
    f.seekg(0, std::ios::end);
    blob.resize(static_cast<size_t>(f.tellg()));
    f.seekg(0);
    f.read(reinterpret_cast<char*>(blob.data()),
           static_cast<std::streamsize>(blob.size()));
    if (f.gcount() != static_cast<std::streamsize>(blob.size())) {
      throw CorruptionError("truncated weights.bin under " + dir);
    }
  }
  const std::string expect = out.manifest.value("checksum", "");
  const std::string got = hex64(fnv1a64(blob.data(), blob.size()));
  if (expect != got) {
    throw CorruptionError("weights checksum mismatch in " + dir + ": manifest " +
                          expect + " vs recomputed " + got);
  }
  size_t running = 0;
  for (const auto& t : out.manifest.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const std::vector<int> shape = t.at("shape").get<std::vector<int>>();
    const size_t offset = t.at("offset_bytes").get<size_t>();
    const int64_t numel = t.at("numel").get<int64_t>();
    int64_t prod = 1;
    for (int d : shape) prod *= d;
    if (prod != numel || offset != running ||
        offset + static_cast<size_t>(numel) * 4 > blob.size()) {
      throw CorruptionError("tensor table corrupt for " + name + " in " + dir);
    }
    running = offset + static_cast<size_t>(numel) * 4;
    Mat m(shape[0], shape.size() > 1 ? shape[1] : 1);
    for (int64_t i = 0; i < numel; ++i) {
      uint32_t bits = 0;
      const unsigned char* b = blob.data() + offset + i * 4;
      bits = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
             (static_cast<uint32_t>(b[2]) << 16) |
             (static_cast<uint32_t>(b[3]) << 24);
      float fv;
      std::memcpy(&fv, &bits, 4);
      m.data[i] = static_cast<double>(fv);
    }
    out.tensors.emplace(name, std::move(m));
  }
  if (running != blob.size()) {
    throw CorruptionError("weights.bin has trailing bytes in " + dir);
  }
  const fs::path vocab_path = fs::path(dir) / "vocab.json";
  if (fs::exists(vocab_path)) {
    out.vocab = Tokenizer::load(vocab_path.string());
  }
  return out;
}

void load_registry_weights(const CheckpointData& ckpt, ParameterRegistry& reg) {
  for (const auto& p : reg.entries()) {
    auto it = ckpt.tensors.find(p->name);
    if (it == ckpt.tensors.end()) {
      throw CorruptionError("checkpoint is missing tensor: " + p->name);
    }
    const Mat& src = it->second;
    if (src.rows != p->rows() || src.cols != p->cols()) {
      throw CorruptionError("checkpoint shape mismatch for " + p->name);
    }
    p->value = src;
    p->grad = Mat(p->rows(), p->cols());
    p->materialized = true;
  }
}

}  // namespace tpcap
