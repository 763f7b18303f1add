#include "acousticpose/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace acousticpose::ad {

GradcheckResult gradcheck(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double eps) {
    for (auto& t : inputs) t.zero_grad();
    f().backward();
    std::vector<std::vector<double>> analytic;
    for (const auto& t : inputs) {
        analytic.emplace_back(t.numel(), 0.0);
        if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.back().begin());
    }

    GradcheckResult r;
    NoGradGuard no_grad;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        auto& values = inputs[i].mutable_data();
        for (std::size_t e = 0; e < values.size(); ++e) {
            const double saved = values[e];
            values[e] = saved + eps;
            const double up = f().item();
            values[e] = saved - eps;
            const double down = f().item();
            values[e] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic[i][e];
            const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
            ++r.coordinates;
            if (err > r.max_rel_error || std::isnan(err)) {
                r.max_rel_error = std::isnan(err) ? INFINITY : err;
                r.worst_input = i;
                r.worst_index = e;
            }
        }
    }
    return r;
}

}  // namespace acousticpose::ad
