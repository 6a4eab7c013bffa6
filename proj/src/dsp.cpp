#include "crowdscene/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

namespace crowdscene::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

double erb_rate(double hz) { return 21.4 * std::log10(1.0 + 0.00437 * hz); }
double erb_rate_to_hz(double e) { return (std::pow(10.0, e / 21.4) - 1.0) / 0.00437; }

void check_input(const PcmBuffer& pcm, const DspConfig& cfg) {
    if (pcm.samples.empty()) throw EmptyInput("empty PCM buffer");
    if (pcm.sample_rate != cfg.sample_rate) {
        throw WrongRate("expected " + std::to_string(cfg.sample_rate) + " Hz input, got " +
                        std::to_string(pcm.sample_rate) + " Hz");
    }
    if (static_cast<int>(pcm.samples.size()) < cfg.window ||
        static_cast<int>(pcm.samples.size()) < cfg.hop) {
        throw TooShort("input shorter than one analysis window");
    }
}

int frame_count(const PcmBuffer& pcm, const DspConfig& cfg) {
    return static_cast<int>(pcm.samples.size()) / cfg.hop;
}

Spectrogram<float> finish(SpectrogramKind kind, const Eigen::MatrixXd& energy,
                          const DspConfig& cfg) {
    Spectrogram<float> s;
    s.kind = kind;
    s.hop_samples = cfg.hop;
    s.sample_rate = cfg.sample_rate;
    s.values = (energy.array() + cfg.log_floor).log().cast<float>();
    return s;
}

std::vector<double> hann(int n) {
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * (i + 0.5) / n);
    return w;
}

}  // namespace

std::string_view kind_name(SpectrogramKind kind) {
    switch (kind) {
        case SpectrogramKind::Mel: return "mel";
        case SpectrogramKind::Cqt: return "cqt";
        case SpectrogramKind::Gam: return "gam";
    }
    return "mel";
}

std::optional<SpectrogramKind> parse_kind(std::string_view name) {
    if (name == "mel") return SpectrogramKind::Mel;
    if (name == "cqt") return SpectrogramKind::Cqt;
    if (name == "gam") return SpectrogramKind::Gam;
    return std::nullopt;
}

PcmBuffer resample(const PcmBuffer& pcm, int target_rate) {
    if (pcm.samples.empty()) throw EmptyInput("empty PCM buffer");
    if (target_rate <= 0 || pcm.sample_rate <= 0) throw WrongRate("sample rates must be positive");
    if (target_rate == pcm.sample_rate) return pcm;

    const double ratio = static_cast<double>(target_rate) / pcm.sample_rate;
    const auto n_in = static_cast<long>(pcm.samples.size());
    const auto n_out = static_cast<long>(std::llround(static_cast<double>(n_in) * ratio));
    const double cutoff = std::min(1.0, ratio);  // relative to the input Nyquist
    constexpr double kZeroCrossings = 16.0;
    const double half_width = kZeroCrossings / cutoff;

    auto weight = [&](double d) {
        const double x = cutoff * d;
        const double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(kPi * x) / (kPi * x);
        return sinc * (0.5 + 0.5 * std::cos(kPi * d / half_width));
    };

    // The fractional position of output j repeats with period P = target / gcd;
    // interior outputs reuse one normalized kernel per phase.
    const long g = std::gcd(static_cast<long>(target_rate), static_cast<long>(pcm.sample_rate));
    const long period = target_rate / g;
    const long stride = pcm.sample_rate / g;
    struct Phase {
        long first = 0;
        std::vector<double> w;
    };
    std::vector<Phase> phases;
    if (period <= 4096) {
        phases.resize(static_cast<std::size_t>(period));
        for (long p = 0; p < period; ++p) {
            const double t = static_cast<double>(p * stride) / static_cast<double>(period);
            auto& ph = phases[static_cast<std::size_t>(p)];
            ph.first = static_cast<long>(std::ceil(t - half_width));
            const long last = static_cast<long>(std::floor(t + half_width));
            double norm = 0.0;
            for (long k = ph.first; k <= last; ++k) {
                ph.w.push_back(weight(static_cast<double>(k) - t));
                norm += ph.w.back();
            }
            for (double& w : ph.w) w /= norm;
        }
    }

    PcmBuffer out;
    out.sample_rate = target_rate;
    out.samples.resize(static_cast<std::size_t>(n_out));
    for (long j = 0; j < n_out; ++j) {
        if (!phases.empty()) {
            const auto& ph = phases[static_cast<std::size_t>(j % period)];
            const long first = (j / period) * stride + ph.first;
            if (first >= 0 && first + static_cast<long>(ph.w.size()) <= n_in) {
                double acc = 0.0;
                const double* x = pcm.samples.data() + first;
                for (std::size_t i = 0; i < ph.w.size(); ++i) acc += ph.w[i] * x[i];
                out.samples[static_cast<std::size_t>(j)] = acc;
                continue;
            }
        }
        const double t = static_cast<double>(j) / ratio;
        const long lo = std::max<long>(0, static_cast<long>(std::ceil(t - half_width)));
        const long hi = std::min<long>(n_in - 1, static_cast<long>(std::floor(t + half_width)));
        double acc = 0.0, norm = 0.0;
        for (long k = lo; k <= hi; ++k) {
            const double w = weight(static_cast<double>(k) - t);
            acc += w * pcm.samples[static_cast<std::size_t>(k)];
            norm += w;
        }
        out.samples[static_cast<std::size_t>(j)] = norm != 0.0 ? acc / norm : 0.0;
    }
    return out;
}

Eigen::MatrixXd mel_filterbank(const DspConfig& cfg) {
    const int n_fft_bins = cfg.fft_size / 2 + 1;
    const double mel_lo = hz_to_mel(cfg.mel_fmin);
    const double mel_hi = hz_to_mel(cfg.mel_fmax);
    std::vector<double> edges(cfg.bins + 2);
    for (int i = 0; i < cfg.bins + 2; ++i) {
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.bins + 1));
    }
    Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(cfg.bins, n_fft_bins);
    const double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.fft_size;
    for (int m = 0; m < cfg.bins; ++m) {
        const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
        const double area_norm = 2.0 / (hi - lo);
        for (int k = 0; k < n_fft_bins; ++k) {
            const double f = k * bin_hz;
            double w = 0.0;
            if (f > lo && f <= mid) {
                w = (f - lo) / (mid - lo);
            } else if (f > mid && f < hi) {
                w = (hi - f) / (hi - mid);
            }
            fb(m, k) = w * area_norm;
        }
        // Filters narrower than one FFT bin still take the nearest bin.
        if (fb.row(m).maxCoeff() <= 0.0) {
            const int k = std::clamp(static_cast<int>(std::lround(mid / bin_hz)), 0, n_fft_bins - 1);
            fb(m, k) = area_norm;
        }
    }
    return fb;
}

Eigen::MatrixXd power_spectrogram(const PcmBuffer& pcm, const DspConfig& cfg) {
    check_input(pcm, cfg);
    const int frames = frame_count(pcm, cfg);
    const int n_fft_bins = cfg.fft_size / 2 + 1;
    const auto window = hann(cfg.window);
    const long n = static_cast<long>(pcm.samples.size());

    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<double> buf(cfg.fft_size);
    std::vector<std::complex<double>> spec;

    Eigen::MatrixXd power(frames, n_fft_bins);
    for (int t = 0; t < frames; ++t) {
        const long start = static_cast<long>(t) * cfg.hop + cfg.hop / 2 - cfg.window / 2;
        std::fill(buf.begin(), buf.end(), 0.0);
        for (int i = 0; i < cfg.window; ++i) {
            const long s = start + i;
            if (s >= 0 && s < n) buf[i] = pcm.samples[static_cast<std::size_t>(s)] * window[i];
        }
        fft.fwd(spec, buf);
        for (int k = 0; k < n_fft_bins; ++k) power(t, k) = std::norm(spec[k]);
    }
    return power;
}

Spectrogram<float> mel_spectrogram(const PcmBuffer& pcm, const DspConfig& cfg) {
    const Eigen::MatrixXd power = power_spectrogram(pcm, cfg);
    const Eigen::MatrixXd fb = mel_filterbank(cfg);
    return finish(SpectrogramKind::Mel, power * fb.transpose(), cfg);
}

std::vector<double> cqt_center_frequencies(const DspConfig& cfg) {
    std::vector<double> f(cfg.bins);
    for (int k = 0; k < cfg.bins; ++k) {
        f[k] = cfg.cqt_fmin * std::pow(2.0, static_cast<double>(k) / cfg.cqt_bins_per_octave);
    }
    return f;
}

Spectrogram<float> cqt_spectrogram(const PcmBuffer& pcm, const DspConfig& cfg) {
    check_input(pcm, cfg);
    const auto freqs = cqt_center_frequencies(cfg);
    if (freqs.back() >= cfg.sample_rate / 2.0) {
        throw BadBins("highest CQT bin lies above the Nyquist frequency");
    }
    const int frames = frame_count(pcm, cfg);
    const double q = 1.0 / (std::pow(2.0, 1.0 / cfg.cqt_bins_per_octave) - 1.0);
    const int bpo = cfg.cqt_bins_per_octave;
    const int octaves = (cfg.bins + bpo - 1) / bpo;

    // Each octave is analysed on a signal decimated by the largest power of two
    // that keeps the octave's top bin below half the reduced Nyquist frequency.
    std::vector<PcmBuffer> decimated{pcm};
    Eigen::MatrixXd energy(frames, cfg.bins);
    for (int o = octaves - 1; o >= 0; --o) {
        const int k_lo = o * bpo;
        const int k_hi = std::min(cfg.bins, k_lo + bpo);
        const double f_top = freqs[k_hi - 1];
        std::size_t level = 0;
        while (f_top * 4.0 * std::pow(2.0, level + 1) <= cfg.sample_rate) ++level;
        while (decimated.size() <= level) {
            const PcmBuffer& prev = decimated.back();
            decimated.push_back(resample(prev, prev.sample_rate / 2));
        }
        const PcmBuffer& sig = decimated[level];
        const double factor = static_cast<double>(cfg.sample_rate) / sig.sample_rate;
        const long n = static_cast<long>(sig.samples.size());

        for (int k = k_lo; k < k_hi; ++k) {
            const int len = static_cast<int>(std::ceil(q * sig.sample_rate / freqs[k]));
            const auto win = hann(len);
            double wsum = 0.0;
            for (double w : win) wsum += w;
            std::vector<std::complex<double>> kernel(len);
            const double omega = 2.0 * kPi * freqs[k] / sig.sample_rate;
            for (int i = 0; i < len; ++i) {
                kernel[i] = std::polar(win[i] / wsum, -omega * (i - len / 2));
            }
            for (int t = 0; t < frames; ++t) {
                const double center_full = static_cast<double>(t) * cfg.hop + cfg.hop / 2.0;
                const long center = std::lround(center_full / factor);
                const long start = center - len / 2;
                std::complex<double> acc = 0.0;
                const int i0 = static_cast<int>(std::max<long>(0, -start));
                const int i1 = static_cast<int>(std::min<long>(len, n - start));
                for (int i = i0; i < i1; ++i) {
                    acc += kernel[i] * sig.samples[static_cast<std::size_t>(start + i)];
                }
                energy(t, k) = std::norm(acc);
            }
        }
    }
    return finish(SpectrogramKind::Cqt, energy, cfg);
}

double erb_bandwidth(double hz) { return 24.7 * (4.37 * hz / 1000.0 + 1.0); }

std::vector<double> gammatone_center_frequencies(const DspConfig& cfg) {
    const double lo = erb_rate(cfg.gam_fmin);
    const double hi = erb_rate(cfg.gam_fmax);
    std::vector<double> f(cfg.bins);
    for (int c = 0; c < cfg.bins; ++c) {
        const double e = cfg.bins == 1 ? lo : lo + (hi - lo) * c / (cfg.bins - 1);
        f[c] = erb_rate_to_hz(e);
    }
    return f;
}

Spectrogram<float> gam_spectrogram(const PcmBuffer& pcm, const DspConfig& cfg) {
    check_input(pcm, cfg);
    const int frames = frame_count(pcm, cfg);
    const auto centers = gammatone_center_frequencies(cfg);
    const auto& x = pcm.samples;
    const double fs = cfg.sample_rate;

    // 4th-order gammatone realised as frequency shift to baseband followed by a
    // cascade of four identical complex one-pole low-pass sections (unit DC gain).
    Eigen::MatrixXd energy(frames, cfg.bins);
    for (int c = 0; c < cfg.bins; ++c) {
        const double omega = 2.0 * kPi * centers[c] / fs;
        const double a = std::exp(-2.0 * kPi * 1.019 * erb_bandwidth(centers[c]) / fs);
        const double g = 1.0 - a;
        const std::complex<double> step = std::polar(1.0, -omega);
        std::complex<double> rot = 1.0;
        std::array<std::complex<double>, 4> s{};
        for (int t = 0; t < frames; ++t) {
            double acc = 0.0;
            const long begin = static_cast<long>(t) * cfg.hop;
            for (long i = begin; i < begin + cfg.hop; ++i) {
                std::complex<double> v = rot * x[static_cast<std::size_t>(i)];
                for (auto& st : s) {
                    st = g * v + a * st;
                    v = st;
                }
                acc += std::norm(v);
                rot *= step;
            }
            rot = std::polar(1.0, -omega * static_cast<double>(begin + cfg.hop));
            energy(t, c) = 2.0 * acc / cfg.hop;
        }
    }
    return finish(SpectrogramKind::Gam, energy, cfg);
}

Spectrogram<float> compute_spectrogram(SpectrogramKind kind, const PcmBuffer& pcm,
                                       const DspConfig& cfg) {
    switch (kind) {
        case SpectrogramKind::Mel: return mel_spectrogram(pcm, cfg);
        case SpectrogramKind::Cqt: return cqt_spectrogram(pcm, cfg);
        case SpectrogramKind::Gam: return gam_spectrogram(pcm, cfg);
    }
    throw Error("unknown spectrogram kind");
}

Spectrogram<float> extract_features(SpectrogramKind kind, const PcmBuffer& pcm,
                                    const DspConfig& cfg) {
    if (pcm.sample_rate == cfg.sample_rate) return compute_spectrogram(kind, pcm, cfg);
    return compute_spectrogram(kind, resample(pcm, cfg.sample_rate), cfg);
}

std::vector<Patch<float>> patchify(const Spectrogram<float>& spec, const std::string& segment_id) {
    if (spec.bins() != kPatchSize) {
        throw BadBins("patchify needs 128 bins, got " + std::to_string(spec.bins()));
    }
    const auto count = static_cast<int>(spec.frames() / kPatchSize);
    std::vector<Patch<float>> patches;
    patches.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Patch<float> p;
        p.channels = 1;
        p.segment_id = segment_id;
        p.index = i;
        p.values.resize(1, kPatchSize * kPatchSize);
        // Row-major storage makes a block of whole rows contiguous.
        p.values.row(0) = Eigen::Map<const Eigen::RowVectorXf>(
            spec.values.data() + static_cast<Eigen::Index>(i) * kPatchSize * kPatchSize,
            kPatchSize * kPatchSize);
        patches.push_back(std::move(p));
    }
    return patches;
}

FeatureStats FeatureStats::fit(const std::vector<const RowMatrix<float>*>& matrices) {
    FeatureStats st;
    if (matrices.empty()) return st;
    const Eigen::Index cols = matrices.front()->cols();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(cols);
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(cols);
    double rows = 0.0;
    for (const auto* m : matrices) {
        if (m->cols() != cols) throw ShapeMismatch("feature matrices disagree on bin count");
        const Eigen::MatrixXd d = m->cast<double>();
        sum += d.colwise().sum().transpose();
        sq += d.array().square().matrix().colwise().sum().transpose();
        rows += static_cast<double>(m->rows());
    }
    st.mean = sum / rows;
    st.stddev = (sq / rows - st.mean.array().square().matrix()).cwiseMax(0.0).cwiseSqrt();
    return st;
}

void FeatureStats::apply(RowMatrix<float>& values) const {
    if (empty()) return;
    if (values.cols() != mean.size()) throw ShapeMismatch("feature stats bin count mismatch");
    const Eigen::RowVectorXf mu = mean.transpose().cast<float>();
    const Eigen::RowVectorXf inv = stddev.cwiseMax(1e-6).cwiseInverse().transpose().cast<float>();
    values = ((values.rowwise() - mu).array().rowwise() * inv.array()).matrix();
}

}  // namespace crowdscene::dsp
