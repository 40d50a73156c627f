#include "gesturemap/vae.hpp"

#include "gesturemap/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace gmap {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void VaeConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::validation, "VAE config: " + what); };
    if (latent_dim != 2) fail("latent_dim must be 2");
    if (input_dim <= 0 || hidden_layers <= 0 || hidden_units <= 0 || epochs <= 0 || batch_size <= 0)
        fail("all counts must be positive");
    if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
    if (!(kl_warmup_fraction >= 0.0 && kl_warmup_fraction <= 1.0))
        fail("kl_warmup_fraction must lie in [0, 1]");
}

VaeConfig VaeConfig::large_scale() {
    VaeConfig c;
    c.hidden_units = 512;
    c.epochs = 2000;
    c.learning_rate = 3e-5;
    return c;
}

double kl_weight(int epoch, int epochs, double warmup_fraction) {
    const double warm = warmup_fraction * static_cast<double>(epochs - 1);
    if (warm <= 0.0) return 1.0;
    return std::min(1.0, static_cast<double>(epoch) / warm);
}

double kl_divergence(std::span<const double> mu, std::span<const double> logvar) {
    double s = 0.0;
    for (std::size_t k = 0; k < mu.size(); ++k)
        s += 1.0 + logvar[k] - mu[k] * mu[k] - std::exp(logvar[k]);
    return -0.5 * s;
}

namespace {

// Platform-independent draws from mt19937_64 (its output sequence is fixed
// by the standard; the std distributions are not).
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double standard_normal(std::mt19937_64& rng) {
    const double u1 = 1.0 - uniform01(rng);  // (0, 1]
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

MatrixXd relu(const MatrixXd& m) { return m.cwiseMax(0.0); }

}  // namespace

VaeModel::VaeModel(const VaeConfig& config) : config_(config) {
    config_.validate();
    std::size_t offset = 0;
    auto make = [&](int in, int out) {
        Layer l{in, out, offset};
        offset += static_cast<std::size_t>(in) * out + out;
        return l;
    };
    const int h = config_.hidden_units;
    int in = config_.input_dim;
    for (int i = 0; i < config_.hidden_layers; ++i) {
        encoder_.push_back(make(in, h));
        in = h;
    }
    mu_head_ = make(h, config_.latent_dim);
    logvar_head_ = make(h, config_.latent_dim);
    in = config_.latent_dim;
    for (int i = 0; i < config_.hidden_layers; ++i) {
        decoder_.push_back(make(in, h));
        in = h;
    }
    decoder_.push_back(make(h, config_.input_dim));
    params_.assign(offset, 0.0);
}

VaeModel VaeModel::initialize(const VaeConfig& config) {
    VaeModel m(config);
    std::mt19937_64 rng(config.rng_seed);
    auto fill = [&](const Layer& l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
        const std::size_t n = static_cast<std::size_t>(l.in) * l.out + l.out;
        for (std::size_t i = 0; i < n; ++i)
            m.params_[l.offset + i] = (2.0 * uniform01(rng) - 1.0) * bound;
    };
    for (const auto& l : m.encoder_) fill(l);
    fill(m.mu_head_);
    fill(m.logvar_head_);
    for (const auto& l : m.decoder_) fill(l);
    return m;
}

VaeModel VaeModel::from_parameters(const VaeConfig& config, std::vector<double> parameters,
                                   std::vector<EpochStats> trace) {
    VaeModel m(config);
    if (parameters.size() != m.params_.size())
        throw Error(ErrorCode::schema, "VAE parameter count " + std::to_string(parameters.size()) +
                                           " does not match config (expected " +
                                           std::to_string(m.params_.size()) + ")");
    m.params_ = std::move(parameters);
    m.trace_ = std::move(trace);
    return m;
}

namespace {

struct LayerView {
    Eigen::Map<const RowMajor> w;
    Eigen::Map<const VectorXd> b;
};

template <class L>
LayerView view(const std::vector<double>& p, const L& l) {
    return {Eigen::Map<const RowMajor>(p.data() + l.offset, l.out, l.in),
            Eigen::Map<const VectorXd>(p.data() + l.offset + static_cast<std::size_t>(l.in) * l.out, l.out)};
}

template <class L>
MatrixXd affine(const std::vector<double>& p, const L& l, const MatrixXd& x) {
    auto v = view(p, l);
    return (v.w * x).colwise() + v.b;
}

template <class L>
void accumulate_grad(std::vector<double>& g, const L& l, const MatrixXd& dpre, const MatrixXd& input) {
    Eigen::Map<RowMajor> gw(g.data() + l.offset, l.out, l.in);
    Eigen::Map<VectorXd> gb(g.data() + l.offset + static_cast<std::size_t>(l.in) * l.out, l.out);
    gw += dpre * input.transpose();
    gb += dpre.rowwise().sum();
}

}  // namespace

std::pair<MatrixXd, MatrixXd> VaeModel::encode_batch(const MatrixXd& x) const {
    if (x.rows() != config_.input_dim)
        throw Error(ErrorCode::domain, "encode: expected input dimension " +
                                           std::to_string(config_.input_dim) + ", got " +
                                           std::to_string(x.rows()));
    MatrixXd a = x;
    for (const auto& l : encoder_) a = relu(affine(params_, l, a));
    return {affine(params_, mu_head_, a), affine(params_, logvar_head_, a)};
}

LatentPoint VaeModel::encode(std::span<const double> x) const {
    if (x.size() != static_cast<std::size_t>(config_.input_dim))
        throw Error(ErrorCode::domain, "encode: expected input dimension " +
                                           std::to_string(config_.input_dim) + ", got " +
                                           std::to_string(x.size()));
    MatrixXd col = Eigen::Map<const VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    auto [mu, lv] = encode_batch(col);
    return {mu(0, 0), mu(1, 0)};
}

LatentPoint VaeModel::encode(const Pose& pose) const {
    auto flat = flatten(pose);
    return encode(std::span<const double>(flat));
}

LatentPath VaeModel::encode_sequence(const GestureSequence& sequence) const {
    LatentPath path;
    path.sequence_id = sequence.id;
    if (sequence.frames.empty()) return path;
    MatrixXd x(config_.input_dim, static_cast<Eigen::Index>(sequence.frames.size()));
    if (config_.input_dim != static_cast<int>(kPoseDim))
        throw Error(ErrorCode::domain, "encode: model input dimension is not a pose");
    for (std::size_t t = 0; t < sequence.frames.size(); ++t) {
        auto flat = flatten(sequence.frames[t]);
        x.col(static_cast<Eigen::Index>(t)) = Eigen::Map<const VectorXd>(flat.data(), kPoseDim);
    }
    // Column-wise evaluation keeps each point bitwise equal to encode(pose).
    path.points.reserve(sequence.frames.size());
    for (Eigen::Index t = 0; t < x.cols(); ++t) {
        auto [mu, lv] = encode_batch(x.col(t));
        path.points.push_back({mu(0, 0), mu(1, 0)});
    }
    return path;
}

MatrixXd VaeModel::decode_batch(const MatrixXd& z) const {
    if (z.rows() != config_.latent_dim) throw Error(ErrorCode::domain, "decode: latent must be 2-D");
    if (!z.allFinite()) throw Error(ErrorCode::domain, "decode: latent point is not finite");
    MatrixXd a = z;
    for (std::size_t i = 0; i + 1 < decoder_.size(); ++i) a = relu(affine(params_, decoder_[i], a));
    return affine(params_, decoder_.back(), a);
}

std::vector<double> VaeModel::decode_vector(const LatentPoint& z) const {
    MatrixXd col(2, 1);
    col << z[0], z[1];
    MatrixXd out = decode_batch(col);
    return {out.data(), out.data() + out.size()};
}

Pose VaeModel::decode(const LatentPoint& z) const {
    if (config_.input_dim != static_cast<int>(kPoseDim))
        throw Error(ErrorCode::domain, "decode: model output dimension is not a pose");
    return unflatten(decode_vector(z));
}

bool VaeModel::all_finite() const {
    return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
}

LossTerms VaeModel::loss(const MatrixXd& batch, const MatrixXd& noise, const LossWeights& weights,
                         std::vector<double>* gradient) const {
    const double B = static_cast<double>(batch.cols());
    const double D = static_cast<double>(config_.input_dim);
    if (batch.rows() != config_.input_dim || noise.rows() != config_.latent_dim ||
        noise.cols() != batch.cols() || batch.cols() == 0)
        throw Error(ErrorCode::domain, "loss: batch/noise shape mismatch");

    // Forward, keeping pre-activations and inputs for the backward pass.
    std::vector<MatrixXd> enc_in, enc_pre;
    MatrixXd a = batch;
    for (const auto& l : encoder_) {
        enc_in.push_back(a);
        enc_pre.push_back(affine(params_, l, a));
        a = relu(enc_pre.back());
    }
    const MatrixXd h = a;
    const MatrixXd mu = affine(params_, mu_head_, h);
    const MatrixXd lv = affine(params_, logvar_head_, h);
    const MatrixXd sd = (0.5 * lv.array()).exp().matrix();
    const MatrixXd z = mu + sd.cwiseProduct(noise);

    std::vector<MatrixXd> dec_in, dec_pre;
    a = z;
    for (std::size_t i = 0; i + 1 < decoder_.size(); ++i) {
        dec_in.push_back(a);
        dec_pre.push_back(affine(params_, decoder_[i], a));
        a = relu(dec_pre.back());
    }
    dec_in.push_back(a);
    const MatrixXd out = affine(params_, decoder_.back(), a);

    const MatrixXd diff = out - batch;
    LossTerms terms;
    // Extended-precision sums keep finite-difference probes of the loss
    // above rounding noise.
    long double sq = 0.0L, kl = 0.0L;
    for (Eigen::Index j = 0; j < diff.cols(); ++j)
        for (Eigen::Index i = 0; i < diff.rows(); ++i) sq += static_cast<long double>(diff(i, j)) * diff(i, j);
    for (Eigen::Index j = 0; j < lv.cols(); ++j)
        for (Eigen::Index i = 0; i < lv.rows(); ++i)
            kl += -0.5L * (1.0L + lv(i, j) - static_cast<long double>(mu(i, j)) * mu(i, j) - std::exp(static_cast<long double>(lv(i, j))));
    terms.reconstruction = static_cast<double>(sq / (B * D));
    terms.kl = static_cast<double>(kl / B);
    terms.total = static_cast<double>((weights.reconstruction * sq + weights.kl * kl) / B);
    if (!gradient) return terms;

    auto& g = *gradient;
    g.assign(params_.size(), 0.0);

    MatrixXd d = diff * (2.0 * weights.reconstruction / B);
    accumulate_grad(g, decoder_.back(), d, dec_in.back());
    d = view(params_, decoder_.back()).w.transpose() * d;
    for (std::size_t i = decoder_.size() - 1; i-- > 0;) {
        d = d.cwiseProduct((dec_pre[i].array() > 0.0).cast<double>().matrix());
        accumulate_grad(g, decoder_[i], d, dec_in[i]);
        d = view(params_, decoder_[i]).w.transpose() * d;
    }
    const MatrixXd& dz = d;
    const MatrixXd dmu = dz + mu * (weights.kl / B);
    const MatrixXd dlv = (dz.array() * noise.array() * sd.array() * 0.5 +
                          (lv.array().exp() - 1.0) * (0.5 * weights.kl / B))
                             .matrix();
    accumulate_grad(g, mu_head_, dmu, h);
    accumulate_grad(g, logvar_head_, dlv, h);
    d = view(params_, mu_head_).w.transpose() * dmu + view(params_, logvar_head_).w.transpose() * dlv;
    for (std::size_t i = encoder_.size(); i-- > 0;) {
        d = d.cwiseProduct((enc_pre[i].array() > 0.0).cast<double>().matrix());
        accumulate_grad(g, encoder_[i], d, enc_in[i]);
        if (i > 0) d = view(params_, encoder_[i]).w.transpose() * d;
    }
    return terms;
}

MatrixXd pose_matrix(const Corpus& corpus) {
    MatrixXd x(static_cast<Eigen::Index>(kPoseDim), static_cast<Eigen::Index>(corpus.pose_count()));
    Eigen::Index col = 0;
    for (const auto& s : corpus.sequences())
        for (const auto& p : s.frames) {
            auto flat = flatten(p);
            x.col(col++) = Eigen::Map<const VectorXd>(flat.data(), kPoseDim);
        }
    return x;
}

VaeModel train(const MatrixXd& data, const VaeConfig& config, const EpochCallback& on_epoch) {
    VaeModel model = VaeModel::initialize(config);
    if (data.cols() == 0) throw Error(ErrorCode::validation, "train: no poses");
    if (data.rows() != config.input_dim)
        throw Error(ErrorCode::domain, "train: data dimension does not match input_dim");
    if (!data.allFinite()) throw Error(ErrorCode::domain, "train: data contains non-finite values");

    // Separate streams so the shuffle order does not depend on noise draws.
    std::mt19937_64 shuffle_rng(config.rng_seed ^ 0x9E3779B97F4A7C15ULL);
    std::mt19937_64 noise_rng(config.rng_seed ^ 0xD1B54A32D192ED03ULL);

    const std::size_t n_params = model.params_.size();
    std::vector<double> m1(n_params, 0.0), m2(n_params, 0.0), grad;
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    long step = 0;

    const auto n = static_cast<std::size_t>(data.cols());
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    const auto batch_size = static_cast<std::size_t>(config.batch_size);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double beta = kl_weight(epoch, config.epochs, config.kl_warmup_fraction);
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng() % i]);

        double rec_sum = 0.0, kl_sum = 0.0;
        int batch_no = 0;
        for (std::size_t start = 0; start < n; start += batch_size, ++batch_no) {
            const std::size_t count = std::min(batch_size, n - start);
            MatrixXd batch(data.rows(), static_cast<Eigen::Index>(count));
            MatrixXd noise(config.latent_dim, static_cast<Eigen::Index>(count));
            for (std::size_t c = 0; c < count; ++c) batch.col(static_cast<Eigen::Index>(c)) = data.col(order[start + c]);
            for (Eigen::Index c = 0; c < noise.cols(); ++c)
                for (Eigen::Index r = 0; r < noise.rows(); ++r) noise(r, c) = standard_normal(noise_rng);

            const LossTerms terms = model.loss(batch, noise, {1.0, beta}, &grad);
            if (!std::isfinite(terms.total))
                throw Error(ErrorCode::domain, "non-finite loss at epoch " + std::to_string(epoch + 1) +
                                                   ", batch " + std::to_string(batch_no + 1) +
                                                   " (reconstruction " + std::to_string(terms.reconstruction) +
                                                   ", kl " + std::to_string(terms.kl) + ")");
            rec_sum += terms.reconstruction * static_cast<double>(count);
            kl_sum += terms.kl * static_cast<double>(count);

            ++step;
            const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
            for (std::size_t p = 0; p < n_params; ++p) {
                m1[p] = kBeta1 * m1[p] + (1.0 - kBeta1) * grad[p];
                m2[p] = kBeta2 * m2[p] + (1.0 - kBeta2) * grad[p] * grad[p];
                model.params_[p] -= config.learning_rate * (m1[p] / c1) / (std::sqrt(m2[p] / c2) + kEps);
            }
            if (!model.all_finite())
                throw Error(ErrorCode::domain, "non-finite parameters after epoch " +
                                                   std::to_string(epoch + 1) + ", batch " +
                                                   std::to_string(batch_no + 1));
        }
        model.trace_.push_back({rec_sum / static_cast<double>(n), kl_sum / static_cast<double>(n), beta});
        if (on_epoch) on_epoch(epoch, model.trace_.back());
    }
    return model;
}

VaeModel train(const Corpus& corpus, const VaeConfig& config, const EpochCallback& on_epoch) {
    if (corpus.empty()) throw Error(ErrorCode::validation, "train: corpus is empty");
    if (!corpus.normalized()) throw Error(ErrorCode::validation, "train: corpus poses are not normalized");
    if (config.input_dim != static_cast<int>(kPoseDim))
        throw Error(ErrorCode::validation, "train: corpus poses are 60-D; set input_dim = 60");
    return train(pose_matrix(corpus), config, on_epoch);
}

double reconstruction_mse(const VaeModel& model, const MatrixXd& data) {
    auto [mu, lv] = model.encode_batch(data);
    const MatrixXd out = model.decode_batch(mu);
    return (out - data).squaredNorm() / static_cast<double>(data.size());
}

GradientCheckResult gradient_check(const VaeModel& model, const MatrixXd& batch, const MatrixXd& noise,
                                   double step, const LossWeights& weights) {
    GradientCheckResult r;
    model.loss(batch, noise, weights, &r.analytic);
    VaeModel probe = model;
    auto params = probe.mutable_parameters();
    r.numeric.resize(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) {
        const double saved = params[p];
        params[p] = saved + step;
        const double up = probe.loss(batch, noise, weights).total;
        params[p] = saved - step;
        const double down = probe.loss(batch, noise, weights).total;
        params[p] = saved;
        r.numeric[p] = (up - down) / (2.0 * step);
        const double a = r.analytic[p], nmr = r.numeric[p];
        const double abs_err = std::abs(a - nmr);
        r.max_absolute_error = std::max(r.max_absolute_error, abs_err);
        r.max_relative_error =
            std::max(r.max_relative_error, abs_err / std::max({std::abs(a), std::abs(nmr), 1e-6}));
    }
    return r;
}

// ---------------------------------------------------------------------------
// Model file

std::string serialize_model(const VaeModel& model) {
    const auto& c = model.config();
    nlohmann::json doc;
    doc["format"] = "gesturemap-vae";
    doc["version"] = 1;
    doc["config"] = {{"input_dim", c.input_dim},
                     {"hidden_layers", c.hidden_layers},
                     {"hidden_units", c.hidden_units},
                     {"latent_dim", c.latent_dim},
                     {"epochs", c.epochs},
                     {"learning_rate", c.learning_rate},
                     {"kl_warmup_fraction", c.kl_warmup_fraction},
                     {"batch_size", c.batch_size},
                     {"rng_seed", c.rng_seed}};
    doc["parameters"] = std::vector<double>(model.parameters().begin(), model.parameters().end());
    doc["training_trace"] = nlohmann::json::array();
    for (const auto& e : model.training_trace())
        doc["training_trace"].push_back({{"reconstruction", e.reconstruction}, {"kl", e.kl}, {"beta", e.beta}});
    return doc.dump();
}

VaeModel deserialize_model(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
        if (doc.value("format", "") != "gesturemap-vae")
            throw Error(ErrorCode::schema, "not a gesturemap VAE model file");
        if (doc.value("version", 0) != 1)
            throw Error(ErrorCode::schema, "unsupported VAE model file version");
        const auto& jc = doc.at("config");
        VaeConfig c;
        c.input_dim = jc.at("input_dim");
        c.hidden_layers = jc.at("hidden_layers");
        c.hidden_units = jc.at("hidden_units");
        c.latent_dim = jc.at("latent_dim");
        c.epochs = jc.at("epochs");
        c.learning_rate = jc.at("learning_rate");
        c.kl_warmup_fraction = jc.at("kl_warmup_fraction");
        c.batch_size = jc.at("batch_size");
        c.rng_seed = jc.at("rng_seed");
        std::vector<EpochStats> trace;
        for (const auto& e : doc.value("training_trace", nlohmann::json::array()))
            trace.push_back({e.at("reconstruction"), e.at("kl"), e.at("beta")});
        return VaeModel::from_parameters(c, doc.at("parameters").get<std::vector<double>>(), std::move(trace));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse, std::string("malformed VAE model file: ") + e.what());
    }
}

VaeModel load_model_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::not_found, "cannot open model file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return deserialize_model(buf.str());
}

void save_model_file(const VaeModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::internal, "cannot write model file '" + path + "'");
    out << serialize_model(model);
}

}  // namespace gmap
