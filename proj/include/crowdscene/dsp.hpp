#pragma once

#include "crowdscene/audio.hpp"
#include "crowdscene/common.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace crowdscene::dsp {

CROWDSCENE_DEFINE_ERROR(EmptyInput);
CROWDSCENE_DEFINE_ERROR(WrongRate);
CROWDSCENE_DEFINE_ERROR(TooShort);
CROWDSCENE_DEFINE_ERROR(BadBins);

enum class SpectrogramKind { Mel, Cqt, Gam };

std::string_view kind_name(SpectrogramKind kind);
std::optional<SpectrogramKind> parse_kind(std::string_view name);

inline constexpr int kPatchSize = 128;

/// Frontend geometry. The defaults produce 640 x 128 matrices for 10 s at 32 kHz:
/// a 500-sample hop divides 320000 exactly.
struct DspConfig {
    int sample_rate = 32000;
    int window = 2560;  // 80 ms
    int hop = 500;
    int fft_size = 4096;
    int bins = 128;

    double mel_fmin = 20.0;
    double mel_fmax = 16000.0;

    double cqt_fmin = 32.7;
    int cqt_bins_per_octave = 16;

    double gam_fmin = 50.0;
    double gam_fmax = 16000.0;

    double log_floor = 1e-10;
};

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Time-major log-energy matrix: one row per frame, one column per frequency bin.
template <typename Scalar = float>
struct Spectrogram {
    SpectrogramKind kind = SpectrogramKind::Mel;
    RowMatrix<Scalar> values;
    int hop_samples = 0;
    int sample_rate = 0;

    Eigen::Index frames() const { return values.rows(); }
    Eigen::Index bins() const { return values.cols(); }
};

/// A 128 x 128 tile with `channels` planes. Each row of `values` is one plane
/// stored row-major (row = time frame or image row, column = bin or image column).
template <typename Scalar = float>
struct Patch {
    int channels = 1;
    RowMatrix<Scalar> values;
    std::string segment_id;
    int index = 0;

    static Patch zeros(int channels) {
        Patch p;
        p.channels = channels;
        p.values = RowMatrix<Scalar>::Zero(channels, kPatchSize * kPatchSize);
        return p;
    }

    Scalar& at(int c, int row, int col) { return values(c, row * kPatchSize + col); }
    Scalar at(int c, int row, int col) const { return values(c, row * kPatchSize + col); }
};

/// Band-limited (Hann-windowed sinc) sample-rate conversion. Output length is
/// round(n * target / source); identical rates return the input unchanged.
PcmBuffer resample(const PcmBuffer& pcm, int target_rate);

/// Triangular mel filters (HTK mel scale), area-normalized: bins x (fft_size/2 + 1).
Eigen::MatrixXd mel_filterbank(const DspConfig& cfg);

/// Hann-windowed power spectrum, frames x (fft_size/2 + 1). Frame t is centered
/// on sample t*hop + hop/2; samples outside the signal read as zero.
Eigen::MatrixXd power_spectrogram(const PcmBuffer& pcm, const DspConfig& cfg);

Spectrogram<float> mel_spectrogram(const PcmBuffer& pcm, const DspConfig& cfg = {});

/// Log-spaced bin centers fmin * 2^(k / bins_per_octave).
std::vector<double> cqt_center_frequencies(const DspConfig& cfg);

Spectrogram<float> cqt_spectrogram(const PcmBuffer& pcm, const DspConfig& cfg = {});

/// Glasberg & Moore equivalent rectangular bandwidth in Hz.
double erb_bandwidth(double hz);

/// Channel centers equally spaced on the ERB-rate scale, ascending.
std::vector<double> gammatone_center_frequencies(const DspConfig& cfg);

Spectrogram<float> gam_spectrogram(const PcmBuffer& pcm, const DspConfig& cfg = {});

Spectrogram<float> compute_spectrogram(SpectrogramKind kind, const PcmBuffer& pcm,
                                       const DspConfig& cfg = {});

/// Resamples to cfg.sample_rate when needed, then computes the spectrogram.
Spectrogram<float> extract_features(SpectrogramKind kind, const PcmBuffer& pcm,
                                    const DspConfig& cfg = {});

/// Non-overlapping 128-frame tiles; trailing frames that do not fill a tile are dropped.
std::vector<Patch<float>> patchify(const Spectrogram<float>& spec, const std::string& segment_id = {});

/// Per-bin standardization statistics, fitted on training spectrograms.
struct FeatureStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd stddev;

    bool empty() const { return mean.size() == 0; }

    static FeatureStats fit(const std::vector<const RowMatrix<float>*>& matrices);

    /// (x - mean) / stddev per column; stddev is floored at 1e-6.
    void apply(RowMatrix<float>& values) const;
};

}  // namespace crowdscene::dsp
