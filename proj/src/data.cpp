#include "tpcap/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "tpcap/tokenizer.hpp"

namespace fs = std::filesystem;

namespace tpcap {

void write_ppm(const Image& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write image: " + path);
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (!f) throw IoError("short write: " + path);
}

Image read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open image: " + path);
  std::string magic;
  f >> magic;
  if (magic != "P6") throw ParseError("not a P6 ppm: " + path);
  int w = 0, h = 0, maxval = 0;
  f >> w >> h >> maxval;
  if (!f || w <= 0 || h <= 0 || maxval != 255) {
    throw ParseError("bad ppm header: " + path);
  }
  f.get();  // single whitespace after maxval
  Image img;
  img.width = w;
  img.height = h;
  img.pixels.resize(static_cast<size_t>(w) * h * 3);
  f.read(reinterpret_cast<char*>(img.pixels.data()),
         static_cast<std::streamsize>(img.pixels.size()));
  if (f.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw ParseError("truncated ppm: " + path);
  }
  return img;
}

namespace {

struct ShapeSpec {
  int cell;  // 0..3 on the 2x2 grid
  int shape;
  int color;
};

const char* kShapeNames[] = {"circle", "square", "triangle"};
const char* kColorNames[] = {"red", "green", "blue", "yellow"};
const unsigned char kColorRgb[][3] = {
    {200, 30, 30}, {30, 160, 40}, {30, 60, 200}, {230, 200, 30}};

void draw_shape(Image& img, const ShapeSpec& s, int jx, int jy) {
  const int cell_px = img.width / 2;
  const int cx = (s.cell % 2) * cell_px + cell_px / 2 + jx;
  const int cy = (s.cell / 2) * cell_px + cell_px / 2 + jy;
  const int r = cell_px / 3;
  const unsigned char* rgb = kColorRgb[s.color];
  for (int y = cy - r; y <= cy + r; ++y) {
    for (int x = cx - r; x <= cx + r; ++x) {
      if (y < 0 || y >= img.height || x < 0 || x >= img.width) continue;
      bool inside = false;
      switch (s.shape) {
        case 0:
          inside = (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
          break;
        case 1:
          inside = true;  // the bounding box is the square
          break;
        case 2: {
          // upward triangle: apex at (cx, cy - r)
          const int dy = y - (cy - r);
          inside = dy >= 0 && std::abs(x - cx) * 2 <= dy;
          break;
        }
      }
      if (inside) {
        unsigned char* p = img.px(y, x);
        p[0] = rgb[0];
        p[1] = rgb[1];
        p[2] = rgb[2];
      }
    }
  }
}

struct SceneRecord {
  Image image;
  std::string caption;       // "a red circle and a blue square"
  std::string alt_caption;   // "there is ..."
  std::vector<std::string> entities;
};

SceneRecord make_scene(Rng& rng, int image_size) {
  SceneRecord rec;
  rec.image.width = image_size;
  rec.image.height = image_size;
  rec.image.pixels.assign(static_cast<size_t>(image_size) * image_size * 3,
                          255);
  const int n_shapes = 1 + static_cast<int>(rng.below(3));
  // distinct cells and distinct (color, shape) pairs
  std::vector<int> cells = {0, 1, 2, 3};
  std::vector<int> combos(12);
  for (int i = 0; i < 12; ++i) combos[i] = i;
  for (int i = 3; i > 0; --i) {
    std::swap(cells[i], cells[rng.below(i + 1)]);
  }
  for (int i = 11; i > 0; --i) {
    std::swap(combos[i], combos[rng.below(i + 1)]);
  }
  std::vector<ShapeSpec> shapes;
  for (int i = 0; i < n_shapes; ++i) {
    ShapeSpec s;
    s.cell = cells[i];
    s.shape = combos[i] % 3;
    s.color = combos[i] / 3;
    shapes.push_back(s);
  }
  std::sort(shapes.begin(), shapes.end(),
            [](const ShapeSpec& a, const ShapeSpec& b) {
              return a.cell < b.cell;
            });
  std::string phrase;
  for (size_t i = 0; i < shapes.size(); ++i) {
    const ShapeSpec& s = shapes[i];
    const int jx = static_cast<int>(rng.below(3)) - 1;
    const int jy = static_cast<int>(rng.below(3)) - 1;
    draw_shape(rec.image, s, jx, jy);
    if (i) phrase += " and ";
    phrase += std::string("a ") + kColorNames[s.color] + " " +
              kShapeNames[s.shape];
    rec.entities.push_back(kColorNames[s.color]);
    rec.entities.push_back(kShapeNames[s.shape]);
  }
  rec.caption = phrase;
  rec.alt_caption = "there is " + phrase;
  return rec;
}

}  // namespace

void generate_synthetic_dataset(const GenConfig& cfg,
                                const std::string& out_dir) {
  if (cfg.n_train < 1 || cfg.n_val < 1 || cfg.n_test < 1) {
    throw ConfigError("gen-data: split sizes must be >= 1");
  }
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "images", ec);
  if (ec) throw IoError("cannot create output directory: " + out_dir);

  Rng rng(derive_seed(cfg.seed, "synthetic-shapes"));
  nlohmann::ordered_json images = nlohmann::ordered_json::array();
  const int total = cfg.n_train + cfg.n_val + cfg.n_test;
  for (int i = 0; i < total; ++i) {
    const std::string split =
        i < cfg.n_train ? "train" : (i < cfg.n_train + cfg.n_val ? "val" : "test");
    SceneRecord rec = make_scene(rng, cfg.image_size);
    char name[32];
    std::snprintf(name, sizeof(name), "img_%06d.ppm", i);
    write_ppm(rec.image, (fs::path(out_dir) / "images" / name).string());

    nlohmann::ordered_json sentences = nlohmann::ordered_json::array();
    for (const std::string& raw : {rec.caption, rec.alt_caption}) {
      nlohmann::ordered_json s;
      s["raw"] = raw;
      s["tokens"] = Tokenizer::normalize(raw);
      sentences.push_back(s);
    }
    nlohmann::ordered_json img;
    img["filename"] = name;
    img["split"] = split;
    img["cocoid"] = i;
    img["sentences"] = sentences;
    img["entities"] = rec.entities;
    images.push_back(img);
  }
  nlohmann::ordered_json root;
  root["images"] = images;
  std::ofstream f(fs::path(out_dir) / "annotations.json");
  if (!f) throw IoError("cannot write annotations under " + out_dir);
  f << root.dump(2) << "\n";
}

CaptionCorpus load_karpathy(const std::string& path, const std::string& split) {
  if (split != "train" && split != "val" && split != "test" && split != "all") {
    throw InputError("unknown split: " + split);
  }
  fs::path ann = path;
  if (fs::is_directory(ann)) ann /= "annotations.json";
  std::ifstream f(ann);
  if (!f) throw IoError("cannot open annotations: " + ann.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw ParseError(std::string("annotations parse failure: ") + e.what());
  }
  if (!j.contains("images") || !j["images"].is_array()) {
    throw ParseError("annotations missing images array");
  }
  const fs::path img_dir = ann.parent_path() / "images";
  CaptionCorpus corpus;
  int idx = -1;
  for (const auto& im : j["images"]) {
    ++idx;
    const std::string where = "record " + std::to_string(idx);
    if (!im.is_object() || !im.contains("filename") || !im.contains("split")) {
      throw ParseError(where + ": missing filename/split");
    }
    CaptionRecord rec;
    rec.filename = im["filename"].get<std::string>();
    rec.split = im["split"].get<std::string>();
    rec.image_id = im.contains("cocoid") ? im["cocoid"].get<int64_t>() : idx;
    if (!im.contains("sentences") || !im["sentences"].is_array() ||
        im["sentences"].empty()) {
      throw ParseError(where + ": missing sentences");
    }
    for (const auto& s : im["sentences"]) {
      std::vector<std::string> tokens;
      if (s.contains("tokens") && s["tokens"].is_array()) {
        for (const auto& t : s["tokens"]) tokens.push_back(t.get<std::string>());
      } else if (s.contains("raw")) {
        tokens = Tokenizer::normalize(s["raw"].get<std::string>());
      } else {
        throw ParseError(where + ": sentence has neither tokens nor raw");
      }
      if (tokens.empty()) throw ParseError(where + ": empty sentence");
      rec.references.push_back(std::move(tokens));
    }
    if (im.contains("entities")) {
      for (const auto& e : im["entities"]) {
        rec.entity_tokens.push_back(e.get<std::string>());
      }
    }
    rec.image_path = (img_dir / rec.filename).string();
    if (split == "all" || rec.split == split) {
      corpus.records.push_back(std::move(rec));
    }
  }
  return corpus;
}

}  // namespace tpcap
