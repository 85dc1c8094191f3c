// Copyright 2026 The riattn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Attention heatmaps as binary PGM (P5), optionally blended onto a PPM (P6).

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "riattn/decoder.hpp"
#include "riattn/error.hpp"
#include "riattn/formats.hpp"

namespace riattn {

struct GrayImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;
};

struct RgbImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // r, g, b interleaved
};

/// One attention map as h x w gray levels, scaled so the map's own maximum is
/// 255. An all-zero map renders black.
inline GrayImage heatmap(std::span<const real> map, std::size_t h, std::size_t w) {
  if (map.size() != h * w) fail(Errc::ShapeMismatch, "attention map does not have h*w cells");
  GrayImage img{w, h, std::vector<std::uint8_t>(h * w, 0)};
  real mx = 0;
  for (auto v : map) mx = std::max(mx, v);
  if (mx <= 0) return img;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const double level = std::round(255.0 * static_cast<double>(map[i] / mx));
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(level, 0.0, 255.0));
  }
  return img;
}

inline GrayImage upscale(const GrayImage& img, std::size_t factor) {
  if (factor == 0) fail(Errc::InvalidConfig, "upscale factor must be positive");
  GrayImage out{img.width * factor, img.height * factor, {}};
  out.pixels.resize(out.width * out.height);
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x)
      out.pixels[y * out.width + x] = img.pixels[(y / factor) * img.width + x / factor];
  return out;
}

inline std::vector<unsigned char> encode_pgm(const GrayImage& img) {
  const std::string header =
      "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

inline std::vector<unsigned char> encode_ppm(const RgbImage& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

namespace detail {

/// Reads the next whitespace-separated header field of a PNM file, skipping
/// '#' comments.
inline std::size_t pnm_field(std::span<const unsigned char> data, std::size_t& pos) {
  while (pos < data.size()) {
    if (data[pos] == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
    } else if (std::isspace(data[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::size_t value = 0;
  bool any = false;
  while (pos < data.size() && std::isdigit(data[pos])) {
    value = value * 10 + (data[pos] - '0');
    ++pos;
    any = true;
  }
  if (!any) fail(Errc::ParseError, "malformed PNM header");
  return value;
}

template <class Image>
Image decode_pnm(std::span<const unsigned char> data, char kind, std::size_t channels) {
  if (data.size() < 2 || data[0] != 'P' || data[1] != kind)
    fail(Errc::BadMagic, std::string("expected a P") + kind + " image");
  std::size_t pos = 2;
  Image img;
  img.width = pnm_field(data, pos);
  img.height = pnm_field(data, pos);
  if (pnm_field(data, pos) != 255) fail(Errc::ParseError, "only 8-bit PNM images are supported");
  ++pos;  // single whitespace byte before the raster
  const std::size_t n = img.width * img.height * channels;
  if (data.size() < pos + n) fail(Errc::TruncatedPayload, "PNM raster is short");
  img.pixels.assign(data.begin() + pos, data.begin() + pos + n);
  return img;
}

}  // namespace detail

inline GrayImage decode_pgm(std::span<const unsigned char> data) {
  return detail::decode_pnm<GrayImage>(data, '5', 1);
}

inline RgbImage decode_ppm(std::span<const unsigned char> data) {
  return detail::decode_pnm<RgbImage>(data, '6', 3);
}

/// Blends a heatmap (stretched to the image by nearest neighbour) onto every
/// channel of `base`: out = alpha * heat + (1 - alpha) * base.
inline RgbImage overlay(const RgbImage& base, const GrayImage& heat, double alpha = 0.5) {
  RgbImage out = base;
  for (std::size_t y = 0; y < base.height; ++y)
    for (std::size_t x = 0; x < base.width; ++x) {
      const std::size_t hy = y * heat.height / base.height;
      const std::size_t hx = x * heat.width / base.width;
      const double v = heat.pixels[hy * heat.width + hx];
      for (std::size_t ch = 0; ch < 3; ++ch) {
        auto& p = out.pixels[(y * base.width + x) * 3 + ch];
        p = static_cast<std::uint8_t>(std::lround(alpha * v + (1.0 - alpha) * p));
      }
    }
  return out;
}

struct RenderOptions {
  std::size_t scale = 32;
  std::optional<std::filesystem::path> source_image;  // PPM (P6) to overlay on
  double alpha = 0.5;
};

/// Writes step_NNN.pgm (and step_NNN.ppm when overlaying) per timestep plus
/// manifest.json mapping timestep -> token -> file.
inline nlohmann::ordered_json render_attention(const AttentionTrace& trace,
                                               std::span<const std::string> words,
                                               const std::filesystem::path& out_dir,
                                               const RenderOptions& options = {}) {
  if (trace.empty()) fail(Errc::EmptyTrace, "nothing to render");
  if (words.size() != trace.size()) fail(Errc::ShapeMismatch, "one word per trace step required");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(Errc::IoError, "cannot create " + out_dir.string() + ": " + ec.message());
  std::optional<RgbImage> base;
  if (options.source_image) base = decode_ppm(read_file(*options.source_image));

  nlohmann::ordered_json manifest;
  manifest["h"] = trace.h;
  manifest["w"] = trace.w;
  manifest["scale"] = options.scale;
  auto& steps = manifest["steps"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < trace.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "step_%03zu", k);
    const auto heat = heatmap(trace.maps[k], trace.h, trace.w);
    const auto big = upscale(heat, options.scale);
    write_file_atomic(out_dir / (std::string(name) + ".pgm"), encode_pgm(big));
    nlohmann::ordered_json entry;
    entry["timestep"] = k;
    entry["token"] = trace.tokens[k];
    entry["word"] = words[k];
    entry["file"] = std::string(name) + ".pgm";
    if (base) {
      write_file_atomic(out_dir / (std::string(name) + ".ppm"),
                        encode_ppm(overlay(*base, heat, options.alpha)));
      entry["overlay"] = std::string(name) + ".ppm";
    }
    steps.push_back(std::move(entry));
  }
  write_text_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

inline nlohmann::ordered_json render_attention(const AttentionTrace& trace, const Vocabulary& vocab,
                                               const std::filesystem::path& out_dir,
                                               const RenderOptions& options = {}) {
  std::vector<std::string> words;
  for (auto t : trace.tokens) words.push_back(vocab.word(t));
  return render_attention(trace, words, out_dir, options);
}

}  // namespace riattn
