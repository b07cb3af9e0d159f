#include "sevagent/fusion.hpp"
#include "sevagent/error.hpp"
#include "sevagent/io.hpp"
#include "sevagent/log.hpp"
#include "sevagent/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

namespace sevagent {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::vector<std::size_t> layer_widths(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t output_dim) {
    std::vector<std::size_t> widths{input_dim};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(output_dim);
    return widths;
}

void check_batch(const FusionModel& model, std::span<const std::vector<double>> inputs, std::span<const int> labels) {
    if (inputs.empty()) throw Error(ErrorCode::EmptyInput, "empty training batch");
    if (inputs.size() != labels.size())
        throw Error(ErrorCode::LengthMismatch, std::to_string(inputs.size()) + " inputs vs " + std::to_string(labels.size()) + " labels");
    for (const auto& x : inputs)
        if (x.size() != model.input_dim)
            throw Error(ErrorCode::DimensionMismatch, "input of length " + std::to_string(x.size()) + ", model expects " +
                                                          std::to_string(model.input_dim));
    for (int y : labels)
        if (y < 1 || static_cast<std::size_t>(y) > model.output_dim)
            throw Error(ErrorCode::OutOfRange, "label " + std::to_string(y));
}

// Activations of every layer for one input: acts[0] = input, acts[L] = logits.
// pre[k] holds the pre-activation of layer k (needed for the ReLU derivative).
struct Trace {
    std::vector<std::vector<double>> acts;
    std::vector<std::vector<double>> pre;
};

Trace run_forward(const FusionModel& model, std::span<const double> input) {
    Trace t;
    const auto layers = model.layer_weights.size();
    t.acts.reserve(layers + 1);
    t.pre.reserve(layers);
    t.acts.emplace_back(input.begin(), input.end());
    for (std::size_t k = 0; k < layers; ++k) {
        const auto& W = model.layer_weights[k];
        const auto& b = model.layer_biases[k];
        const auto& a = t.acts.back();
        std::vector<double> z(W.rows);
        for (std::size_t r = 0; r < W.rows; ++r) {
            double sum = b[r];
            const double* row = &W.data[r * W.cols];
            for (std::size_t c = 0; c < W.cols; ++c) sum += row[c] * a[c];
            z[r] = sum;
        }
        t.pre.push_back(z);
        if (k + 1 < layers)
            for (auto& v : z) v = v > 0.0 ? v : 0.0;
        t.acts.push_back(std::move(z));
    }
    return t;
}

}  // namespace

FusionModel FusionModel::zeros(std::size_t input_dim, std::vector<std::size_t> hidden_sizes, std::size_t output_dim) {
    FusionModel m;
    m.input_dim = input_dim;
    m.output_dim = output_dim;
    m.hidden_sizes = std::move(hidden_sizes);
    const auto widths = layer_widths(m.input_dim, m.hidden_sizes, m.output_dim);
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
        m.layer_weights.emplace_back(widths[k + 1], widths[k]);
        m.layer_biases.emplace_back(widths[k + 1], 0.0);
    }
    m.validate();
    return m;
}

void FusionModel::validate() const {
    if (input_dim == 0 || output_dim == 0) throw Error(ErrorCode::DimensionMismatch, "zero-width model");
    const auto widths = layer_widths(input_dim, hidden_sizes, output_dim);
    if (layer_weights.size() != widths.size() - 1 || layer_biases.size() != widths.size() - 1)
        throw Error(ErrorCode::DimensionMismatch, "layer count does not match hidden sizes");
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
        const auto& W = layer_weights[k];
        if (widths[k] == 0) throw Error(ErrorCode::DimensionMismatch, "zero-width hidden layer");
        if (W.rows != widths[k + 1] || W.cols != widths[k] || W.data.size() != W.rows * W.cols)
            throw Error(ErrorCode::DimensionMismatch, "layer " + std::to_string(k) + " weight shape");
        if (layer_biases[k].size() != widths[k + 1])
            throw Error(ErrorCode::DimensionMismatch, "layer " + std::to_string(k) + " bias length");
        for (double v : W.data)
            if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteGradient, "non-finite weight in layer " + std::to_string(k));
        for (double v : layer_biases[k])
            if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteGradient, "non-finite bias in layer " + std::to_string(k));
    }
}

std::size_t FusionModel::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t k = 0; k < layer_weights.size(); ++k) n += layer_weights[k].data.size() + layer_biases[k].size();
    return n;
}

std::vector<double> FusionModel::flatten() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (std::size_t k = 0; k < layer_weights.size(); ++k) {
        out.insert(out.end(), layer_weights[k].data.begin(), layer_weights[k].data.end());
        out.insert(out.end(), layer_biases[k].begin(), layer_biases[k].end());
    }
    return out;
}

void FusionModel::assign(std::span<const double> parameters) {
    if (parameters.size() != parameter_count())
        throw Error(ErrorCode::DimensionMismatch, "parameter vector of length " + std::to_string(parameters.size()));
    std::size_t i = 0;
    for (std::size_t k = 0; k < layer_weights.size(); ++k) {
        for (auto& v : layer_weights[k].data) v = parameters[i++];
        for (auto& v : layer_biases[k]) v = parameters[i++];
    }
}

std::string FusionModel::to_checkpoint() const {
    ordered_json doc;
    doc["format"] = "sevagent-fusion-mlp";
    doc["version"] = 1;
    doc["input_dim"] = input_dim;
    doc["output_dim"] = output_dim;
    doc["hidden_sizes"] = hidden_sizes;
    doc["activation"] = "relu";
    doc["layers"] = ordered_json::array();
    for (std::size_t k = 0; k < layer_weights.size(); ++k) {
        const auto& W = layer_weights[k];
        ordered_json layer;
        layer["rows"] = W.rows;
        layer["cols"] = W.cols;
        auto rows = ordered_json::array();
        for (std::size_t r = 0; r < W.rows; ++r)
            rows.push_back(std::vector<double>(W.data.begin() + static_cast<std::ptrdiff_t>(r * W.cols),
                                               W.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * W.cols)));
        layer["weights"] = std::move(rows);
        layer["bias"] = layer_biases[k];
        doc["layers"].push_back(std::move(layer));
    }
    return doc.dump(1) + "\n";
}

FusionModel FusionModel::from_checkpoint(std::string_view text) {
    FusionModel m;
    try {
        const auto doc = json::parse(text);
        if (doc.at("format").get<std::string>() != "sevagent-fusion-mlp")
            throw Error(ErrorCode::InvalidConfig, "not a fusion checkpoint");
        if (doc.at("version").get<int>() != 1)
            throw Error(ErrorCode::InvalidConfig, "unsupported checkpoint version " + doc.at("version").dump());
        if (doc.at("activation").get<std::string>() != "relu")
            throw Error(ErrorCode::InvalidConfig, "unsupported activation " + doc.at("activation").dump());
        m.input_dim = doc.at("input_dim").get<std::size_t>();
        m.output_dim = doc.at("output_dim").get<std::size_t>();
        m.hidden_sizes = doc.at("hidden_sizes").get<std::vector<std::size_t>>();
        for (const auto& layer : doc.at("layers")) {
            Matrix W(layer.at("rows").get<std::size_t>(), layer.at("cols").get<std::size_t>());
            const auto& rows = layer.at("weights");
            if (rows.size() != W.rows) throw Error(ErrorCode::DimensionMismatch, "checkpoint weight rows");
            for (std::size_t r = 0; r < W.rows; ++r) {
                const auto row = rows.at(r).get<std::vector<double>>();
                if (row.size() != W.cols) throw Error(ErrorCode::DimensionMismatch, "checkpoint weight cols");
                std::copy(row.begin(), row.end(), W.data.begin() + static_cast<std::ptrdiff_t>(r * W.cols));
            }
            m.layer_weights.push_back(std::move(W));
            m.layer_biases.push_back(layer.at("bias").get<std::vector<double>>());
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("fusion checkpoint: ") + e.what());
    }
    m.validate();
    return m;
}

void FusionModel::save(const std::filesystem::path& path) const { write_text_file(path, to_checkpoint()); }

FusionModel FusionModel::load(const std::filesystem::path& path) { return from_checkpoint(read_text_file(path)); }

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
    if (epochs < 1) throw Error(ErrorCode::InvalidArgument, "epochs must be >= 1");
    if (init_scale && !(*init_scale > 0.0)) throw Error(ErrorCode::InvalidArgument, "init_scale must be positive");
    for (auto h : hidden_sizes)
        if (h == 0) throw Error(ErrorCode::InvalidArgument, "hidden layer of width 0");
}

FusionModel initialize_model(std::size_t input_dim, const std::vector<std::size_t>& hidden_sizes, std::size_t output_dim,
                             std::uint64_t seed, std::optional<double> init_scale) {
    auto m = FusionModel::zeros(input_dim, hidden_sizes, output_dim);
    Rng rng(seed);
    for (auto& W : m.layer_weights) {
        const double scale = init_scale.value_or(1.0 / std::sqrt(static_cast<double>(W.cols)));
        for (auto& v : W.data) v = rng.uniform(-scale, scale);
    }
    return m;
}

std::vector<double> forward(const FusionModel& model, std::span<const double> input) {
    if (input.size() != model.input_dim)
        throw Error(ErrorCode::DimensionMismatch,
                    "input of length " + std::to_string(input.size()) + ", model expects " + std::to_string(model.input_dim));
    return std::move(run_forward(model, input).acts.back());
}

std::vector<double> log_softmax(std::span<const double> logits) {
    if (logits.empty()) return {};
    const double peak = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - peak);
    const double log_norm = peak + std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_norm;
    return out;
}

std::vector<double> softmax(std::span<const double> logits) {
    if (logits.empty()) return {};
    const double peak = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) sum += out[i] = std::exp(logits[i] - peak);
    for (auto& p : out) p /= sum;
    return out;
}

double mean_cross_entropy(const FusionModel& model, std::span<const std::vector<double>> inputs, std::span<const int> labels) {
    check_batch(model, inputs, labels);
    double total = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto logits = run_forward(model, inputs[i]).acts.back();
        total -= log_softmax(logits)[static_cast<std::size_t>(labels[i] - 1)];
    }
    return total / static_cast<double>(inputs.size());
}

std::vector<double> loss_gradient(const FusionModel& model, std::span<const std::vector<double>> inputs,
                                  std::span<const int> labels) {
    check_batch(model, inputs, labels);
    const auto layers = model.layer_weights.size();
    const double inv_n = 1.0 / static_cast<double>(inputs.size());

    std::vector<Matrix> grad_w;
    std::vector<std::vector<double>> grad_b;
    for (std::size_t k = 0; k < layers; ++k) {
        grad_w.emplace_back(model.layer_weights[k].rows, model.layer_weights[k].cols);
        grad_b.emplace_back(model.layer_biases[k].size(), 0.0);
    }

    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto trace = run_forward(model, inputs[i]);
        // dL_i/dz at the output: softmax - onehot.
        auto delta = softmax(trace.acts.back());
        delta[static_cast<std::size_t>(labels[i] - 1)] -= 1.0;

        for (std::size_t k = layers; k-- > 0;) {
            const auto& a_prev = trace.acts[k];
            auto& gW = grad_w[k];
            for (std::size_t r = 0; r < gW.rows; ++r) {
                const double d = delta[r] * inv_n;
                grad_b[k][r] += d;
                double* row = &gW.data[r * gW.cols];
                for (std::size_t c = 0; c < gW.cols; ++c) row[c] += d * a_prev[c];
            }
            if (k == 0) break;
            const auto& W = model.layer_weights[k];
            const auto& pre_prev = trace.pre[k - 1];
            std::vector<double> next(W.cols, 0.0);
            for (std::size_t r = 0; r < W.rows; ++r) {
                const double* row = &W.data[r * W.cols];
                for (std::size_t c = 0; c < W.cols; ++c) next[c] += row[c] * delta[r];
            }
            for (std::size_t c = 0; c < next.size(); ++c)
                if (!(pre_prev[c] > 0.0)) next[c] = 0.0;
            delta = std::move(next);
        }
    }

    std::vector<double> flat;
    flat.reserve(model.parameter_count());
    for (std::size_t k = 0; k < layers; ++k) {
        flat.insert(flat.end(), grad_w[k].data.begin(), grad_w[k].data.end());
        flat.insert(flat.end(), grad_b[k].begin(), grad_b[k].end());
    }
    return flat;
}

FusionModel grad_step(const FusionModel& model, std::span<const std::vector<double>> inputs, std::span<const int> labels,
                      double learning_rate) {
    const auto gradient = loss_gradient(model, inputs, labels);
    for (double g : gradient)
        if (!std::isfinite(g)) throw Error(ErrorCode::NonFiniteGradient, "gradient has a non-finite entry");
    auto params = model.flatten();
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] -= learning_rate * gradient[i];
        if (!std::isfinite(params[i])) throw Error(ErrorCode::NonFiniteGradient, "update produced a non-finite parameter");
    }
    FusionModel next = model;
    next.assign(params);
    return next;
}

std::pair<FusionModel, TrainReport> train(std::span<const std::vector<double>> inputs, std::span<const int> labels,
                                          std::size_t num_classes, const TrainConfig& config) {
    config.validate();
    if (inputs.empty()) throw Error(ErrorCode::EmptyInput, "no training samples");
    auto model = initialize_model(inputs.front().size(), config.hidden_sizes, num_classes, config.seed, config.init_scale);
    check_batch(model, inputs, labels);

    std::set<int> present(labels.begin(), labels.end());
    for (int c = 1; c <= static_cast<int>(num_classes); ++c)
        if (!present.count(c)) log_warn("fusion training data has no sample of class " + std::to_string(c));

    TrainReport report;
    report.loss_per_epoch.reserve(static_cast<std::size_t>(config.epochs));
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        report.loss_per_epoch.push_back(mean_cross_entropy(model, inputs, labels));
        model = grad_step(model, inputs, labels, config.learning_rate);
    }
    const auto predictions = predict_all(model, inputs);
    report.final_train_accuracy = accuracy(predictions, labels);
    return {std::move(model), std::move(report)};
}

int argmax_label(std::span<const double> values) {
    if (values.empty()) throw Error(ErrorCode::EmptyInput, "argmax of empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return static_cast<int>(best) + 1;
}

int predict(const FusionModel& model, std::span<const double> input) { return argmax_label(forward(model, input)); }

std::vector<int> predict_all(const FusionModel& model, std::span<const std::vector<double>> inputs) {
    std::vector<int> out;
    out.reserve(inputs.size());
    for (const auto& x : inputs) out.push_back(predict(model, x));
    return out;
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size())
        throw Error(ErrorCode::LengthMismatch, std::to_string(predictions.size()) + " predictions vs " +
                                                   std::to_string(labels.size()) + " labels");
    if (predictions.empty()) throw Error(ErrorCode::EmptyInput, "accuracy of empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == labels[i];
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

}  // namespace sevagent
