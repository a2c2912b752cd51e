#ifndef AECBSE_WAV_H_
#define AECBSE_WAV_H_

#include <filesystem>

#include "aecbse/stft.h"

namespace aecbse {

enum class WavFormat { kPcm16, kFloat32 };

// Reads 16-bit PCM or 32-bit IEEE float RIFF/WAVE files, any channel count.
// Samples are returned in [-1, 1) for PCM input.
Audio read_wav(const std::filesystem::path& path);

void write_wav(const std::filesystem::path& path, const Audio& audio,
               WavFormat format = WavFormat::kFloat32);

}  // namespace aecbse

#endif  // AECBSE_WAV_H_
