#include "hldet/mfcc.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>

#include "hldet/error.hpp"

namespace hldet::data {

double mfcc_step_samples() { return 16000.0 * 0.25 / 29.97; }

std::size_t mfcc_frame_count(std::size_t n_samples) {
  if (n_samples < kMfccWindow) return 0;
  const double step = mfcc_step_samples();
  std::size_t count = 0;
  while (std::llround(static_cast<double>(count) * step) <
         static_cast<long long>(n_samples)) {
    ++count;
  }
  return count;
}

namespace {

// Iterative radix-2 FFT, fixed 512 points. Verified against a direct DFT in
// the unit tests.
void fft512(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

// Triangular filters on FFT bin indices, filter j spanning mel points
// j..j+2 of a uniform grid over 0..8 kHz.
std::vector<std::vector<double>> mel_filterbank() {
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(8000.0);
  std::vector<std::size_t> bins(kMfccFilters + 2);
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const double mel =
        mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                     static_cast<double>(kMfccFilters + 1);
    bins[i] = static_cast<std::size_t>(
        std::floor(static_cast<double>(kMfccFft + 1) * mel_to_hz(mel) / 16000.0));
  }
  std::vector<std::vector<double>> fb(kMfccFilters,
                                      std::vector<double>(kMfccFft / 2 + 1, 0.0));
  for (std::size_t j = 0; j < kMfccFilters; ++j) {
    for (std::size_t k = bins[j]; k < bins[j + 1]; ++k) {
      fb[j][k] = static_cast<double>(k - bins[j]) /
                 static_cast<double>(bins[j + 1] - bins[j]);
    }
    for (std::size_t k = bins[j + 1]; k <= bins[j + 2]; ++k) {
      fb[j][k] = static_cast<double>(bins[j + 2] - k) /
                 static_cast<double>(bins[j + 2] - bins[j + 1]);
    }
  }
  return fb;
}

}  // namespace

std::vector<double> extract_mfcc(const std::vector<double>& samples,
                                 std::size_t* n_frames_out) {
  if (samples.size() < kMfccWindow) {
    throw ContractError("extract_mfcc: need at least one 25 ms window (" +
                        std::to_string(kMfccWindow) + " samples)");
  }
  const std::size_t n_frames = mfcc_frame_count(samples.size());
  if (n_frames_out) *n_frames_out = n_frames;

  std::vector<double> window(kMfccWindow);
  for (std::size_t i = 0; i < kMfccWindow; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi *
                                     static_cast<double>(i) /
                                     static_cast<double>(kMfccWindow - 1));
  }
  static const std::vector<std::vector<double>> fb = mel_filterbank();

  // Orthonormal DCT-II basis, 26 -> 13.
  std::vector<double> dct(kMfccCoeffs * kMfccFilters);
  for (std::size_t k = 0; k < kMfccCoeffs; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) /
                                   static_cast<double>(kMfccFilters));
    for (std::size_t j = 0; j < kMfccFilters; ++j) {
      dct[k * kMfccFilters + j] =
          scale * std::cos(std::numbers::pi * static_cast<double>(k) *
                           (2.0 * static_cast<double>(j) + 1.0) /
                           (2.0 * static_cast<double>(kMfccFilters)));
    }
  }

  const double step = mfcc_step_samples();
  std::vector<double> out(n_frames * kMfccCoeffs);
  std::vector<std::complex<double>> spec(kMfccFft);
  std::vector<double> power(kMfccFft / 2 + 1);
  std::vector<double> energies(kMfccFilters);
  const auto n = static_cast<long long>(samples.size());

  for (std::size_t fi = 0; fi < n_frames; ++fi) {
    const long long center = std::llround(static_cast<double>(fi) * step);
    const long long start = center - static_cast<long long>(kMfccWindow) / 2;
    std::fill(spec.begin(), spec.end(), std::complex<double>(0.0, 0.0));
    for (std::size_t i = 0; i < kMfccWindow; ++i) {
      const long long s = start + static_cast<long long>(i);
      const double v = (s >= 0 && s < n) ? samples[static_cast<std::size_t>(s)] : 0.0;
      spec[i] = v * window[i];
    }
    fft512(spec);
    for (std::size_t k = 0; k <= kMfccFft / 2; ++k) {
      power[k] = std::norm(spec[k]) / static_cast<double>(kMfccFft);
    }
    for (std::size_t j = 0; j < kMfccFilters; ++j) {
      double e = 0.0;
      for (std::size_t k = 0; k <= kMfccFft / 2; ++k) e += fb[j][k] * power[k];
      energies[j] = std::log(std::max(e, 1e-10));
    }
    double* row = out.data() + fi * kMfccCoeffs;
    for (std::size_t k = 0; k < kMfccCoeffs; ++k) {
      double acc = 0.0;
      for (std::size_t j = 0; j < kMfccFilters; ++j) {
        acc += dct[k * kMfccFilters + j] * energies[j];
      }
      row[k] = acc;
    }
  }
  return out;
}

// --- WAV ---------------------------------------------------------------------

namespace {

std::uint32_t le_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t le_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

WavData read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ContractError("cannot open wav: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  if (buf.size() < 12 || std::memcmp(p, "RIFF", 4) != 0 ||
      std::memcmp(p + 8, "WAVE", 4) != 0) {
    throw ParseError(path + ": not a RIFF/WAVE file", 0);
  }
  std::size_t pos = 12;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  WavData wav;
  bool got_fmt = false, got_data = false;
  while (pos + 8 <= buf.size()) {
    const std::string chunk(reinterpret_cast<const char*>(p + pos), 4);
    const std::uint32_t size = le_u32(p + pos + 4);
    pos += 8;
    if (pos + size > buf.size()) {
      throw ParseError(path + ": chunk " + chunk + " runs past end of file", pos);
    }
    if (chunk == "fmt ") {
      if (size < 16) throw ParseError(path + ": fmt chunk too small", pos);
      format = le_u16(p + pos);
      channels = le_u16(p + pos + 2);
      rate = le_u32(p + pos + 4);
      bits = le_u16(p + pos + 14);
      got_fmt = true;
    } else if (chunk == "data") {
      if (!got_fmt) throw ParseError(path + ": data chunk before fmt", pos);
      if (channels != 1) {
        throw ContractError(path + ": expected mono audio, got " +
                            std::to_string(channels) + " channels");
      }
      const unsigned char* d = p + pos;
      if (format == 1 && bits == 16) {
        const std::size_t count = size / 2;
        wav.samples.resize(count);
        for (std::size_t i = 0; i < count; ++i) {
          const auto v = static_cast<std::int16_t>(le_u16(d + 2 * i));
          wav.samples[i] = static_cast<double>(v) / 32768.0;
        }
      } else if (format == 3 && bits == 32) {
        const std::size_t count = size / 4;
        wav.samples.resize(count);
        for (std::size_t i = 0; i < count; ++i) {
          const std::uint32_t u = le_u32(d + 4 * i);
          float fv;
          std::memcpy(&fv, &u, sizeof fv);
          wav.samples[i] = static_cast<double>(fv);
        }
      } else {
        throw ContractError(path + ": unsupported encoding (need PCM-16 or float-32)");
      }
      got_data = true;
    }
    pos += size + (size % 2);  // chunks are word-aligned
  }
  if (!got_fmt || !got_data) {
    throw ParseError(path + ": missing fmt or data chunk", pos);
  }
  wav.sample_rate = rate;
  return wav;
}

void write_wav_pcm16(const std::string& path, std::size_t sample_rate,
                     const std::vector<double>& samples) {
  std::string out;
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  auto u16 = [&](std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
  };
  const std::uint32_t data_size = static_cast<std::uint32_t>(samples.size() * 2);
  out.append("RIFF");
  u32(36 + data_size);
  out.append("WAVE");
  out.append("fmt ");
  u32(16);
  u16(1);  // PCM
  u16(1);  // mono
  u32(static_cast<std::uint32_t>(sample_rate));
  u32(static_cast<std::uint32_t>(sample_rate * 2));
  u16(2);
  u16(16);
  out.append("data");
  u32(data_size);
  for (double s : samples) {
    const double clamped = std::clamp(s, -1.0, 1.0);
    u16(static_cast<std::uint16_t>(
        static_cast<std::int16_t>(std::lround(clamped * 32767.0))));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ContractError("cannot open wav for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

std::vector<double> extract_mfcc_from_wav(const std::string& path,
                                          std::size_t* n_frames) {
  WavData wav = read_wav(path);
  if (wav.sample_rate != kMfccSampleRate) {
    throw ContractError(path + ": sample rate " + std::to_string(wav.sample_rate) +
                        ", expected " + std::to_string(kMfccSampleRate));
  }
  return extract_mfcc(wav.samples, n_frames);
}

}  // namespace hldet::data
