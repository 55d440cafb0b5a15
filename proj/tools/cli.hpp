#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "rqen/dataset.hpp"
#include "rqen/image_io.hpp"
#include "rqen/model.hpp"

namespace rqen::cli {

// Exit status of every command.
enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

// Runs one command line (without the program name), e.g.
// {"gen-synth", "--out", "d/"}. Diagnostics go to `err`, progress to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// `key = value` lines; blank lines and lines starting with '#' are skipped.
// Keys may be written with or without the leading dashes.
std::vector<std::pair<std::string, std::string>> read_config(const std::filesystem::path& path);

// Splices the entries of every `--config FILE` into `args` as `--key=value`,
// dropping keys that are also given on the command line.
std::vector<std::string> expand_config(const std::vector<std::string>& args);

// "1,5,10,20" -> {1, 5, 10, 20}. Throws std::invalid_argument on anything else.
std::vector<std::size_t> parse_ranks(const std::string& text);

// Blue (0) to red (1); values outside [0,1] are clamped.
std::array<std::uint8_t, 3> score_color(double score);

// Frames side by side on top, below them one row of cells per active region
// coloured by the frame's raw quality score.
Image score_strip(const Tracklet& tracklet, const TrackletOutputs& outputs,
                  const RegionMask& mask);

}  // namespace rqen::cli
