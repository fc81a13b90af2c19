#pragma once

#include <string_view>

#include "confuse/linalg.hpp"

namespace confuse {

enum class Activation { Selu, Relu, Prelu, LeakyRelu, Tanh, Sigmoid };

inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;
inline constexpr double kDefaultPreluSlope = 0.25;
inline constexpr double kLeakyReluSlope = 0.01;

// Activation tag plus the negative-side slope. The slope is learnable for
// PReLU, fixed at 0.01 for LeakyReLU, and unused by the other kinds.
struct ActivationKind {
    Activation tag = Activation::Relu;
    double slope = 0.0;
};

// Lowercase tag names: selu, relu, prelu, leakyrelu, tanh, sigmoid.
// A negative slope argument selects the kind's default; explicit slopes must
// lie in (0, 1) and are only accepted for prelu/leakyrelu.
ActivationKind make_activation(std::string_view name, double slope = -1.0);
std::string_view activation_name(Activation tag);
bool uses_slope(Activation tag);

// Elementwise Phi.
Matrix apply(const ActivationKind& kind, const Matrix& x);

// Elementwise dPhi/dx; the ReLU family takes the right-derivative at 0.
Matrix derivative(const ActivationKind& kind, const Matrix& x);

// Elementwise dPhi/dslope; zero except for PReLU.
Matrix slope_derivative(const ActivationKind& kind, const Matrix& x);

// Projection onto the nonnegative orthant, elementwise max(x, 0).
// Identical to apply(relu, x): the proximity operator of the positive-orthant
// indicator is exactly the ReLU.
Matrix prox_nonneg(const Matrix& x);

}  // namespace confuse
