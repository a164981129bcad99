#include "hldet/bundle.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "hldet/error.hpp"

namespace hldet::data {

const FeatureArray& FeatureBundle::at(Modality m) const {
  auto it = features.find(m);
  if (it == features.end()) {
    throw ContractError("bundle " + video_id + ": modality " +
                        modality_info(m).name + " not present");
  }
  return it->second;
}

std::size_t FeatureBundle::frames() const {
  for (const auto& [m, arr] : features) {
    if (m != Modality::Mfcc) return arr.rows;
  }
  if (has(Modality::Mfcc)) return at(Modality::Mfcc).rows / 4;
  return 0;
}

void FeatureBundle::validate() const {
  const std::size_t n = frames();
  for (const auto& [m, arr] : features) {
    const auto& info = modality_info(m);
    if (arr.cols != info.dim) {
      throw ContractError("bundle " + video_id + ": " + info.name + " dim " +
                          std::to_string(arr.cols) + ", expected " +
                          std::to_string(info.dim));
    }
    const std::size_t expected = n * info.samples_per_frame;
    if (arr.rows != expected) {
      throw ContractError("bundle " + video_id + ": " + info.name + " has " +
                          std::to_string(arr.rows) + " rows, expected " +
                          std::to_string(expected));
    }
    if (arr.values.size() != arr.rows * arr.cols) {
      throw ContractError("bundle " + video_id + ": " + info.name +
                          " value count mismatch");
    }
    if (m == Modality::Faces) {
      for (float v : arr.values) {
        if (v < 0.0f) {
          throw ContractError("bundle " + video_id +
                              ": faces areas must be non-negative");
        }
      }
    }
  }
}

// --- HLFB io -----------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'H', 'L', 'F', 'B'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  put_u64(out, bits);
}

void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  put_u32(out, bits);
}

}  // namespace

void write_bundle(const std::string& path, const FeatureBundle& bundle) {
  bundle.validate();
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(bundle.video_id.size()));
  out.append(bundle.video_id);
  put_f64(out, bundle.fps);
  put_u32(out, static_cast<std::uint32_t>(bundle.features.size()));
  for (const auto& [m, arr] : bundle.features) {
    const std::string name = modality_info(m).name;
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    put_u32(out, 2);
    put_u64(out, arr.rows);
    put_u64(out, arr.cols);
    for (float v : arr.values) put_f32(out, v);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ContractError("cannot open bundle for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw ContractError("short write to bundle: " + path);
}

FeatureBundle read_bundle(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ContractError("cannot open bundle: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto need = [&](std::size_t n, const std::string& what) {
    if (pos + n > buf.size()) {
      throw ParseError(path + ": truncated while reading " + what, pos);
    }
  };
  auto u32 = [&](const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  };
  auto u64 = [&](const std::string& what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  };

  need(4, "magic");
  if (std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw ParseError(path + ": bad magic, expected HLFB", 0);
  }
  pos += 4;
  const std::uint32_t version = u32("version");
  if (version != kVersion) {
    throw ParseError(path + ": unsupported version " + std::to_string(version), 4);
  }
  FeatureBundle bundle;
  const std::uint32_t id_len = u32("video id length");
  need(id_len, "video id");
  bundle.video_id = buf.substr(pos, id_len);
  pos += id_len;
  {
    std::uint64_t bits = u64("fps tag");
    std::memcpy(&bundle.fps, &bits, sizeof bits);
  }
  const std::uint32_t count = u32("modality count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = u32("modality name length");
    need(name_len, "modality name");
    const std::string name = buf.substr(pos, name_len);
    pos += name_len;
    const std::uint32_t rank = u32("record " + name + " rank");
    if (rank != 2) {
      throw ParseError(path + ": record " + name + " has rank " +
                       std::to_string(rank) + ", expected 2", pos - 4);
    }
    FeatureArray arr;
    arr.rows = static_cast<std::size_t>(u64("record " + name + " rows"));
    arr.cols = static_cast<std::size_t>(u64("record " + name + " cols"));
    need(arr.rows * arr.cols * 4, "record " + name + " data");
    arr.values.resize(arr.rows * arr.cols);
    std::memcpy(arr.values.data(), buf.data() + pos, arr.values.size() * 4);
    pos += arr.values.size() * 4;
    bundle.features[parse_modality(name)] = std::move(arr);
  }
  bundle.validate();
  return bundle;
}

// --- resampling & slicing ----------------------------------------------------

FeatureBundle resample_to_30fps(const FeatureBundle& bundle,
                                bool* already_30fps_warning) {
  if (already_30fps_warning) *already_30fps_warning = false;
  if (bundle.fps == 30.0) {
    if (already_30fps_warning) *already_30fps_warning = true;
    return bundle;
  }
  const double src_fps = bundle.fps;
  const std::size_t in_frames = bundle.frames();
  const std::size_t out_frames = static_cast<std::size_t>(
      std::llround(static_cast<double>(in_frames) * 30.0 / src_fps));
  FeatureBundle out;
  out.video_id = bundle.video_id;
  out.fps = 30.0;
  std::vector<std::size_t> index_map(out_frames);
  for (std::size_t j = 0; j < out_frames; ++j) {
    auto src = static_cast<std::size_t>(
        std::llround(static_cast<double>(j) * src_fps / 30.0));
    index_map[j] = std::min(src, in_frames - 1);
  }
  for (const auto& [m, arr] : bundle.features) {
    const std::size_t per = modality_info(m).samples_per_frame;
    FeatureArray dst;
    dst.cols = arr.cols;
    dst.rows = out_frames * per;
    dst.values.resize(dst.rows * dst.cols);
    for (std::size_t j = 0; j < out_frames; ++j) {
      const std::size_t src_frame = index_map[j];
      for (std::size_t s = 0; s < per; ++s) {
        std::memcpy(dst.values.data() + ((j * per + s) * dst.cols),
                    arr.values.data() + ((src_frame * per + s) * arr.cols),
                    arr.cols * sizeof(float));
      }
    }
    out.features[m] = std::move(dst);
  }
  return out;
}

std::vector<SegmentRecord> slice_segments(
    const FeatureBundle& bundle,
    const std::vector<std::pair<std::size_t, double>>& labels,
    bool* dropped_frames_warning) {
  if (bundle.fps != 30.0) {
    throw ContractError("slice_segments: bundle " + bundle.video_id +
                        " must be at 30 fps (resample first)");
  }
  const std::size_t frames = bundle.frames();
  const std::size_t whole_segments = frames / kFramesPerSegment;
  if (dropped_frames_warning) {
    *dropped_frames_warning = frames % kFramesPerSegment != 0;
  }
  std::vector<SegmentRecord> out;
  out.reserve(labels.size());
  for (const auto& [index, label] : labels) {
    if (index >= whole_segments) {
      throw ContractError("video " + bundle.video_id + ": label for segment " +
                          std::to_string(index) + " but only " +
                          std::to_string(whole_segments) +
                          " whole segments exist");
    }
    SegmentRecord rec;
    rec.video_id = bundle.video_id;
    rec.segment_index = index;
    rec.label = label;
    rec.frame_begin = index * kFramesPerSegment;
    rec.frame_end = (index + 1) * kFramesPerSegment;
    out.push_back(rec);
  }
  return out;
}

ad::Tensor segment_features(const FeatureBundle& bundle,
                            const SegmentRecord& segment, Modality m) {
  const FeatureArray& arr = bundle.at(m);
  const std::size_t per = modality_info(m).samples_per_frame;
  const std::size_t row_begin = segment.frame_begin * per;
  const std::size_t rows = (segment.frame_end - segment.frame_begin) * per;
  if (row_begin + rows > arr.rows) {
    throw ContractError("segment " + segment.video_id + "/" +
                        std::to_string(segment.segment_index) +
                        " reaches past the end of " + modality_info(m).name);
  }
  ad::Tensor t({rows, arr.cols});
  const float* src = arr.values.data() + row_begin * arr.cols;
  for (std::size_t i = 0; i < rows * arr.cols; ++i) {
    t[i] = static_cast<double>(src[i]);
  }
  return t;
}

}  // namespace hldet::data
