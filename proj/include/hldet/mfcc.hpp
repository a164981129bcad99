#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace hldet::data {

inline constexpr std::size_t kMfccSampleRate = 16000;
inline constexpr std::size_t kMfccWindow = 400;  // 25 ms at 16 kHz
inline constexpr std::size_t kMfccFft = 512;
inline constexpr std::size_t kMfccFilters = 26;
inline constexpr std::size_t kMfccCoeffs = 13;

/// Nominal frame step in samples: 16000 * 0.25 / 29.97, i.e. four frames per
/// 29.97 fps video frame (rounds to 133).
double mfcc_step_samples();

/// Number of MFCC frames produced for n samples: one frame per center
/// round(i * step) that lands inside the signal. A whole number of video
/// frames yields exactly 4 frames per video frame.
std::size_t mfcc_frame_count(std::size_t n_samples);

/// 13 MFCCs per frame from mono 16 kHz audio. Frames are centered on exact
/// multiples of the nominal step (so individual steps alternate between 133
/// and 134 samples) and zero-padded at the edges; Hann window, 512-point
/// power spectrum, 26 mel filters over 0-8 kHz, natural log floored at 1e-10,
/// orthonormal DCT-II, coefficients 0-12. Output is row-major [frames x 13].
std::vector<double> extract_mfcc(const std::vector<double>& samples,
                                 std::size_t* n_frames = nullptr);

struct WavData {
  std::size_t sample_rate = 0;
  std::vector<double> samples;  // mono, in [-1, 1] for PCM input
};

/// Reads mono PCM-16 or float-32 WAV. Wrong channel count or an unsupported
/// encoding is a contract error; extract_mfcc_from_wav additionally requires
/// 16 kHz.
WavData read_wav(const std::string& path);
void write_wav_pcm16(const std::string& path, std::size_t sample_rate,
                     const std::vector<double>& samples);

std::vector<double> extract_mfcc_from_wav(const std::string& path,
                                          std::size_t* n_frames = nullptr);

}  // namespace hldet::data
