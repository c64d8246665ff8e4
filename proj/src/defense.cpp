#include "gradleak/defense.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "gradleak/errors.hpp"

namespace gradleak::defense {

void DefenseSpec::validate() const {
    if (kind == DefenseKind::GradDrop && !(rate >= 0.0 && rate < 1.0)) {
        throw InvalidArgument("graddrop: rate must lie in [0, 1)");
    }
}

std::string DefenseSpec::describe() const {
    if (kind == DefenseKind::SignSgd) return "sign";
    std::ostringstream os;
    os << "drop(" << rate << ")";
    return os.str();
}

Matrix sign_sgd(const Matrix& delta_w) {
    Matrix out(delta_w.rows(), delta_w.cols());
    auto src = delta_w.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = (src[i] > 0.0) - (src[i] < 0.0);
    return out;
}

Matrix grad_drop(const Matrix& delta_w, double rate) {
    DefenseSpec{DefenseKind::GradDrop, rate}.validate();
    Matrix out = delta_w;
    const std::size_t total = delta_w.size();
    const auto drop = static_cast<std::size_t>(std::floor(rate * static_cast<double>(total)));
    if (drop == 0) return out;

    auto src = delta_w.data();
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto less = [&](std::size_t a, std::size_t b) {
        const double x = std::abs(src[a]);
        const double y = std::abs(src[b]);
        return x < y || (x == y && a < b);
    };
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(drop - 1), idx.end(), less);
    auto dst = out.data();
    for (std::size_t i = 0; i < drop; ++i) dst[idx[i]] = 0.0;
    return out;
}

Matrix apply(const DefenseSpec& spec, const Matrix& delta_w) {
    spec.validate();
    return spec.kind == DefenseKind::SignSgd ? sign_sgd(delta_w) : grad_drop(delta_w, spec.rate);
}

}  // namespace gradleak::defense
