#include "acousticpose/signal/stft.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "acousticpose/common/error.hpp"

namespace acousticpose::signal {
namespace {

struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
};

// FFTW planning is not thread-safe; execution with the new-array interface is.
std::mutex g_plan_mutex;

fftw_plan r2c_plan(std::size_t n) {
    static std::map<std::size_t, fftw_plan> plans;
    std::lock_guard lock(g_plan_mutex);
    auto it = plans.find(n);
    if (it != plans.end()) return it->second;
    std::unique_ptr<double, FftwFree> in(fftw_alloc_real(n));
    std::unique_ptr<fftw_complex, FftwFree> out(fftw_alloc_complex(n / 2 + 1));
    fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.get(), out.get(), FFTW_ESTIMATE);
    plans.emplace(n, plan);
    return plan;
}

}  // namespace

void StftParams::validate() const {
    if (n_fft < 2 || (n_fft & (n_fft - 1)) != 0) {
        throw ConfigError("n_fft must be a power of two, got " + std::to_string(n_fft));
    }
    if (hop == 0 || hop > n_fft) {
        throw ConfigError("hop must be in [1, n_fft]");
    }
}

std::vector<double> make_window(WindowKind kind, std::size_t n) {
    std::vector<double> w(n, 1.0);
    if (kind == WindowKind::Hann) {
        for (std::size_t i = 0; i < n; ++i) {
            w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
        }
    }
    return w;
}

std::size_t stft_frame_count(std::size_t length, const StftParams& params) {
    if (length < params.n_fft) return 0;
    return length / params.hop;
}

StftGrid stft(const MonoSignal& signal, const StftParams& params) {
    params.validate();
    if (signal.size() < params.n_fft) {
        throw EmptyInputError("signal of " + std::to_string(signal.size()) +
                              " samples is shorter than one window (" + std::to_string(params.n_fft) + ")");
    }
    const std::size_t n = params.n_fft;
    const std::size_t front_pad = (n - params.hop) / 2;

    StftGrid grid;
    grid.params = params;
    grid.sample_rate = signal.sample_rate;
    grid.n_freq = n / 2 + 1;
    grid.frames = stft_frame_count(signal.size(), params);
    grid.bins.assign(grid.n_freq * grid.frames, {0.0, 0.0});

    const auto window = make_window(params.window, n);
    fftw_plan plan = r2c_plan(n);
    std::unique_ptr<double, FftwFree> in(fftw_alloc_real(n));
    std::unique_ptr<fftw_complex, FftwFree> out(fftw_alloc_complex(grid.n_freq));

    const auto len = static_cast<long>(signal.size());
    for (std::size_t t = 0; t < grid.frames; ++t) {
        const long start = static_cast<long>(t * params.hop) - static_cast<long>(front_pad);
        for (std::size_t i = 0; i < n; ++i) {
            const long s = start + static_cast<long>(i);
            in.get()[i] = (s >= 0 && s < len) ? signal.samples[static_cast<std::size_t>(s)] * window[i] : 0.0;
        }
        fftw_execute_dft_r2c(plan, in.get(), out.get());
        for (std::size_t k = 0; k < grid.n_freq; ++k) {
            grid.at(k, t) = {out.get()[k][0], out.get()[k][1]};
        }
    }
    return grid;
}

}  // namespace acousticpose::signal
