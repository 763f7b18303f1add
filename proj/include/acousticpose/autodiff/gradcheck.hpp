#pragma once

#include <functional>
#include <vector>

#include "acousticpose/autodiff/tensor.hpp"

namespace acousticpose::ad {

struct GradcheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
    std::size_t coordinates = 0;
};

// Compares backward() of the scalar `f` against central differences in every
// coordinate of `inputs`: |analytic - numeric| / max(1, |analytic|).
GradcheckResult gradcheck(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double eps = 1e-5);

}  // namespace acousticpose::ad
