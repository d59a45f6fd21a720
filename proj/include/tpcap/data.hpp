#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tpcap/common.hpp"

namespace tpcap {

// 8-bit RGB raster, row-major, 3 channels interleaved.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<unsigned char> pixels;  // height * width * 3

  unsigned char* px(int y, int x) {
    return pixels.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
  const unsigned char* px(int y, int x) const {
    return pixels.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
};

void write_ppm(const Image& img, const std::string& path);
Image read_ppm(const std::string& path);

struct CaptionRecord {
  int64_t image_id = 0;
  std::string filename;
  std::string image_path;  // resolved absolute/relative path on disk
  std::string split;       // train | val | test
  std::vector<std::vector<std::string>> references;  // token lists
  std::vector<std::string> entity_tokens;            // synthetic corpora only
};

struct CaptionCorpus {
  std::vector<CaptionRecord> records;
  bool empty() const { return records.empty(); }
  size_t size() const { return records.size(); }
};

struct GenConfig {
  int n_train = 10;
  int n_val = 2;
  int n_test = 2;
  uint64_t seed = 0;
  int image_size = 32;
};

// Writes images/*.ppm plus annotations.json (Karpathy-style schema) under
// out_dir. Pure function of (config, seed): reruns are byte-identical.
void generate_synthetic_dataset(const GenConfig& cfg,
                                const std::string& out_dir);

// `path` may be the annotations file or a directory containing
// annotations.json. Returns records of the requested split only;
// split "all" keeps everything.
CaptionCorpus load_karpathy(const std::string& path, const std::string& split);

}  // namespace tpcap
