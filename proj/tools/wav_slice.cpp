// Minimal stand-in for an external media decoder: copies [start, start + duration)
// seconds of a WAV file into a mono 16-bit WAV. Output may be shorter than
// requested when the input ends early.
#include "crowdscene/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>

int main(int argc, char** argv) {
    if (argc != 5) {
        std::cerr << "usage: wav_slice <input.wav> <output.wav> <start_s> <duration_s>\n";
        return 2;
    }
    try {
        const auto in = crowdscene::read_wav(argv[1]);
        const double start = std::atof(argv[3]);
        const double duration = std::atof(argv[4]);
        const auto n = in.samples.size();
        const auto begin = std::min(n, static_cast<std::size_t>(std::llround(start * in.sample_rate)));
        const auto end = std::min(n, begin + static_cast<std::size_t>(std::llround(duration * in.sample_rate)));
        crowdscene::PcmBuffer out;
        out.sample_rate = in.sample_rate;
        out.samples.assign(in.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                           in.samples.begin() + static_cast<std::ptrdiff_t>(end));
        crowdscene::write_wav(argv[2], out);
    } catch (const std::exception& e) {
        std::cerr << "wav_slice: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
