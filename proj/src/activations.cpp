#include "confuse/activations.hpp"

#include <cmath>
#include <string>

namespace confuse {

ActivationKind make_activation(std::string_view name, double slope) {
    Activation tag;
    if (name == "selu") {
        tag = Activation::Selu;
    } else if (name == "relu") {
        tag = Activation::Relu;
    } else if (name == "prelu") {
        tag = Activation::Prelu;
    } else if (name == "leakyrelu") {
        tag = Activation::LeakyRelu;
    } else if (name == "tanh") {
        tag = Activation::Tanh;
    } else if (name == "sigmoid") {
        tag = Activation::Sigmoid;
    } else {
        throw ConfigError("unknown activation '" + std::string(name) +
                          "' (expected selu, relu, prelu, leakyrelu, tanh or sigmoid)");
    }
    if (!uses_slope(tag)) {
        if (slope >= 0.0) {
            throw ConfigError("activation '" + std::string(name) + "' takes no slope");
        }
        return {tag, 0.0};
    }
    if (slope < 0.0) {
        slope = tag == Activation::Prelu ? kDefaultPreluSlope : kLeakyReluSlope;
    }
    if (slope <= 0.0 || slope >= 1.0) {
        throw ConfigError("slope must lie in (0, 1), got " + std::to_string(slope));
    }
    return {tag, slope};
}

std::string_view activation_name(Activation tag) {
    switch (tag) {
        case Activation::Selu: return "selu";
        case Activation::Relu: return "relu";
        case Activation::Prelu: return "prelu";
        case Activation::LeakyRelu: return "leakyrelu";
        case Activation::Tanh: return "tanh";
        case Activation::Sigmoid: return "sigmoid";
    }
    return "?";
}

bool uses_slope(Activation tag) {
    return tag == Activation::Prelu || tag == Activation::LeakyRelu;
}

Matrix apply(const ActivationKind& kind, const Matrix& x) {
    const double slope = kind.slope;
    switch (kind.tag) {
        case Activation::Selu:
            return x.unaryExpr([](double a) {
                return a > 0.0 ? kSeluLambda * a : kSeluLambda * kSeluAlpha * std::expm1(a);
            });
        case Activation::Relu:
            return x.cwiseMax(0.0);
        case Activation::Prelu:
        case Activation::LeakyRelu:
            return x.unaryExpr([slope](double a) { return a > 0.0 ? a : slope * a; });
        case Activation::Tanh:
            return x.array().tanh().matrix();
        case Activation::Sigmoid:
            return x.unaryExpr([](double a) { return 1.0 / (1.0 + std::exp(-a)); });
    }
    throw Error("apply: unreachable");
}

Matrix derivative(const ActivationKind& kind, const Matrix& x) {
    const double slope = kind.slope;
    switch (kind.tag) {
        case Activation::Selu:
            return x.unaryExpr([](double a) {
                return a >= 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(a);
            });
        case Activation::Relu:
            return x.unaryExpr([](double a) { return a >= 0.0 ? 1.0 : 0.0; });
        case Activation::Prelu:
        case Activation::LeakyRelu:
            return x.unaryExpr([slope](double a) { return a >= 0.0 ? 1.0 : slope; });
        case Activation::Tanh:
            return x.unaryExpr([](double a) {
                const double t = std::tanh(a);
                return 1.0 - t * t;
            });
        case Activation::Sigmoid:
            return x.unaryExpr([](double a) {
                const double s = 1.0 / (1.0 + std::exp(-a));
                return s * (1.0 - s);
            });
    }
    throw Error("derivative: unreachable");
}

Matrix slope_derivative(const ActivationKind& kind, const Matrix& x) {
    if (kind.tag != Activation::Prelu) {
        return Matrix::Zero(x.rows(), x.cols());
    }
    return x.unaryExpr([](double a) { return a >= 0.0 ? 0.0 : a; });
}

Matrix prox_nonneg(const Matrix& x) {
    return x.cwiseMax(0.0);
}

}  // namespace confuse
