#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sevagent {

/// Row-major dense matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

enum class Activation { Relu };

/// Multilayer perceptron mapping a d-dimensional score vector to C logits.
/// Layer k maps width[k] -> width[k+1] with widths d, hidden..., C; ReLU
/// between layers, none after the last.
struct FusionModel {
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    std::vector<std::size_t> hidden_sizes;
    Activation activation = Activation::Relu;
    std::vector<Matrix> layer_weights;               // out x in
    std::vector<std::vector<double>> layer_biases;  // out

    static FusionModel zeros(std::size_t input_dim, std::vector<std::size_t> hidden_sizes, std::size_t output_dim);

    /// Throws Error(DimensionMismatch) when shapes do not chain from
    /// input_dim through hidden_sizes to output_dim, and
    /// Error(NonFiniteGradient) when a parameter is not finite.
    void validate() const;

    std::size_t parameter_count() const;
    /// Parameters in layer order, each layer's weights (row-major) then bias.
    std::vector<double> flatten() const;
    void assign(std::span<const double> parameters);

    std::string to_checkpoint() const;
    static FusionModel from_checkpoint(std::string_view text);
    void save(const std::filesystem::path& path) const;
    static FusionModel load(const std::filesystem::path& path);

    friend bool operator==(const FusionModel&, const FusionModel&) = default;
};

struct TrainConfig {
    double learning_rate = 0.05;
    int epochs = 500;
    std::uint64_t seed = 0;
    std::vector<std::size_t> hidden_sizes{32};
    /// Half-width of the uniform weight initialisation; unset means
    /// 1/sqrt(fan_in) per layer.
    std::optional<double> init_scale;

    void validate() const;
};

struct TrainReport {
    std::vector<double> loss_per_epoch;  // loss of the parameters each epoch started from
    double final_train_accuracy = 0.0;

    friend bool operator==(const TrainReport&, const TrainReport&) = default;
};

/// Weights uniform in [-scale, scale], biases zero.
FusionModel initialize_model(std::size_t input_dim, const std::vector<std::size_t>& hidden_sizes,
                             std::size_t output_dim, std::uint64_t seed, std::optional<double> init_scale = {});

std::vector<double> forward(const FusionModel& model, std::span<const double> input);

/// Max-subtracted log-softmax and softmax.
std::vector<double> log_softmax(std::span<const double> logits);
std::vector<double> softmax(std::span<const double> logits);

/// Mean over samples of -log softmax(z)_y, labels 1..C.
double mean_cross_entropy(const FusionModel& model, std::span<const std::vector<double>> inputs,
                          std::span<const int> labels);

/// Gradient of mean_cross_entropy in flatten() layout.
std::vector<double> loss_gradient(const FusionModel& model, std::span<const std::vector<double>> inputs,
                                  std::span<const int> labels);

/// One full-batch step: theta <- theta - eta * grad L(theta).
FusionModel grad_step(const FusionModel& model, std::span<const std::vector<double>> inputs,
                      std::span<const int> labels, double learning_rate);

std::pair<FusionModel, TrainReport> train(std::span<const std::vector<double>> inputs, std::span<const int> labels,
                                          std::size_t num_classes, const TrainConfig& config);

/// 1-based index of the largest value; ties go to the lowest index.
int argmax_label(std::span<const double> values);

int predict(const FusionModel& model, std::span<const double> input);
std::vector<int> predict_all(const FusionModel& model, std::span<const std::vector<double>> inputs);

/// Fraction of positions where prediction equals label.
double accuracy(std::span<const int> predictions, std::span<const int> labels);

}  // namespace sevagent
