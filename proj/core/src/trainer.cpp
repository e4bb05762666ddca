#include "a2gnn/trainer.hpp"

#include "a2gnn/rng.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace a2gnn {

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (stage_split < 0 || stage_split > epochs)
        throw std::invalid_argument("TrainConfig: stage_split must be in [0, epochs]");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("TrainConfig: negative learning rate");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("TrainConfig: negative weight decay");
    if (!(dropout >= 0.0 && dropout < 1.0))
        throw std::invalid_argument("TrainConfig: dropout must be in [0,1)");
    if (hidden_dim < 1 || n_layers < 1 || n_classes < 2)
        throw std::invalid_argument("TrainConfig: bad model dimensions");
}

GnnParams init_params(int in_dim, const TrainConfig& cfg) {
    GnnParams p;
    p.in_dim = in_dim;
    p.hidden_dim = cfg.hidden_dim;
    p.n_classes = cfg.n_classes;
    p.n_layers = cfg.n_layers;
    p.beta = cfg.beta;
    p.w0.resize(static_cast<size_t>(in_dim) * cfg.hidden_dim);
    p.attn_w.assign(cfg.n_layers, 1.0);
    p.w_out.resize(static_cast<size_t>(cfg.hidden_dim) * cfg.n_classes);

    Rng rng(mix_seed(cfg.seed, 0x496e6974ULL));
    double s0 = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (double& w : p.w0) w = rng.uniform(-s0, s0);
    double s1 = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
    for (double& w : p.w_out) w = rng.uniform(-s1, s1);
    return p;
}

namespace {

struct AdamState {
    std::vector<double> m, v;
    explicit AdamState(size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// Decoupled weight decay: decay is applied directly to the parameter and
// never enters the moment estimates.
void adamw_step(std::vector<double>& param, const std::vector<double>& grad, AdamState& st,
                int t, double lr, double decay, const AdamConfig& a) {
    double c1 = 1.0 - std::pow(a.b1, t);
    double c2 = 1.0 - std::pow(a.b2, t);
    for (size_t i = 0; i < param.size(); ++i) {
        st.m[i] = a.b1 * st.m[i] + (1.0 - a.b1) * grad[i];
        st.v[i] = a.b2 * st.v[i] + (1.0 - a.b2) * grad[i] * grad[i];
        param[i] -= lr * ((st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + a.eps) + decay * param[i]);
    }
}

} // namespace

TrainResult train(const std::vector<TrainItem>& corpus, const TrainConfig& cfg) {
    cfg.validate();
    if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
    int in_dim = corpus.front().graph.feat_dim;
    for (const TrainItem& item : corpus)
        if (item.graph.feat_dim != in_dim)
            throw std::invalid_argument("train: graphs disagree on feature dimension");

    TrainResult result;
    result.params = init_params(in_dim, cfg);
    GnnParams& params = result.params;

    AdamState st_w0(params.w0.size());
    AdamState st_attn(params.attn_w.size());
    AdamState st_out(params.w_out.size());
    int step = 0;

    // Bandwidth matrices are constant per graph; cache them for stage 2.
    std::vector<std::vector<double>> bw_cache(corpus.size());
    auto bandwidth_for = [&](size_t idx) -> const std::vector<double>* {
        if (!(cfg.use_reg)) return nullptr;
        if (bw_cache[idx].empty())
            bw_cache[idx] = bandwidth_matrix(corpus[idx].graph, cfg.sigma_xy, cfg.sigma_rgb);
        return &bw_cache[idx];
    };

    Rng shuffle_rng(mix_seed(cfg.seed, 0x53687566ULL));
    std::vector<size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), size_t{0});

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        int stage = epoch <= cfg.stage_split ? 1 : 2;
        shuffle_rng.shuffle(order);

        EpochLog log;
        log.epoch = epoch;
        log.stage = stage;

        for (size_t oi = 0; oi < order.size(); ++oi) {
            size_t idx = order[oi];
            const TrainItem& item = corpus[idx];
            uint64_t drop_seed = mix_seed(mix_seed(cfg.seed, static_cast<uint64_t>(epoch)), idx);
            ForwardTrace trace = forward(item.graph, params, true, drop_seed, cfg.dropout);

            JointLossOptions opts;
            opts.stage = stage;
            opts.lambda1 = cfg.lambda1;
            opts.use_mp = cfg.use_mp;
            opts.use_reg = cfg.use_reg;
            opts.apply_cc = cfg.use_cc;
            opts.tau_cc = cfg.tau_cc;
            opts.strict_eq28 = cfg.strict_eq28;
            opts.sigma_xy = cfg.sigma_xy;
            opts.sigma_rgb = cfg.sigma_rgb;
            if (stage == 2) opts.bandwidth = bandwidth_for(idx);

            LossReport report = joint_loss(item.graph, params, trace, item.labels, item.boxes, opts);
            if (!std::isfinite(report.total))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", graph " +
                                         (item.id.empty() ? std::to_string(idx) : item.id));

            ++step;
            adamw_step(params.w0, report.grads.w0, st_w0, step, cfg.learning_rate,
                       cfg.weight_decay, cfg.adam);
            adamw_step(params.attn_w, report.grads.attn_w, st_attn, step, cfg.learning_rate, 0.0,
                       cfg.adam);
            adamw_step(params.w_out, report.grads.w_out, st_out, step, cfg.learning_rate,
                       cfg.weight_decay, cfg.adam);

            log.ce += report.ce;
            log.mp += report.mp;
            log.reg += report.reg;
            log.total += report.total;
            log.removed_seeds += report.removed_seeds;
        }

        double inv = 1.0 / static_cast<double>(corpus.size());
        log.ce *= inv;
        log.mp *= inv;
        log.reg *= inv;
        log.total *= inv;
        result.log.push_back(log);
    }
    return result;
}

double grad_check(const PixelGraph& graph, const LabelMap& labels, const BoxSet& boxes,
                  const GnnParams& params, const GradCheckOptions& opts) {
    if (!(opts.step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");

    JointLossOptions jopts;
    jopts.stage = opts.stage;
    jopts.lambda1 = opts.lambda1;
    jopts.use_mp = opts.use_mp;
    jopts.use_reg = opts.use_reg;
    jopts.apply_cc = false; // label edits are discrete; check the smooth part
    jopts.sigma_xy = opts.sigma_xy;
    jopts.sigma_rgb = opts.sigma_rgb;

    std::vector<double> bw;
    if (opts.stage == 2 && opts.use_reg) {
        bw = bandwidth_matrix(graph, opts.sigma_xy, opts.sigma_rgb);
        jopts.bandwidth = &bw;
    }

    // Freeze the row/column argmax selection from the unperturbed forward so
    // the finite-difference objective is differentiable.
    ForwardTrace base = forward(graph, params, false, 0);
    MpSelection sel = select_mp_nodes(base.o, boxes, graph.grid_width, graph.grid_height);
    jopts.fixed_selection = &sel;

    LossReport analytic = joint_loss(graph, params, base, labels, boxes, jopts);

    auto loss_at = [&](const GnnParams& p) {
        ForwardTrace t = forward(graph, p, false, 0);
        return joint_loss(graph, p, t, labels, boxes, jopts).total;
    };

    size_t n_total = params.n_parameters();
    std::vector<size_t> entries;
    if (n_total <= opts.max_entries) {
        entries.resize(n_total);
        std::iota(entries.begin(), entries.end(), size_t{0});
    } else {
        Rng rng(mix_seed(opts.seed, 0x47434bULL));
        entries.reserve(opts.max_entries);
        for (size_t k = 0; k < opts.max_entries; ++k)
            entries.push_back(rng.next_u64() % n_total);
    }

    auto entry_ref = [](GnnParams& p, size_t flat) -> double& {
        if (flat < p.w0.size()) return p.w0[flat];
        flat -= p.w0.size();
        if (flat < p.attn_w.size()) return p.attn_w[flat];
        flat -= p.attn_w.size();
        return p.w_out[flat];
    };
    auto analytic_at = [&](size_t flat) -> double {
        if (flat < analytic.grads.w0.size()) return analytic.grads.w0[flat];
        flat -= analytic.grads.w0.size();
        if (flat < analytic.grads.attn_w.size()) return analytic.grads.attn_w[flat];
        flat -= analytic.grads.attn_w.size();
        return analytic.grads.w_out[flat];
    };

    double max_err = 0.0;
    GnnParams work = params;
    for (size_t flat : entries) {
        double& ref = entry_ref(work, flat);
        double saved = ref;
        ref = saved + opts.step;
        double f_plus = loss_at(work);
        ref = saved - opts.step;
        double f_minus = loss_at(work);
        ref = saved;

        double fd = (f_plus - f_minus) / (2.0 * opts.step);
        double a = analytic_at(flat);
        double err = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6});
        if (err > max_err) max_err = err;
    }
    return max_err;
}

std::vector<ProbMap> infer(const std::vector<TrainItem>& corpus, const GnnParams& params) {
    std::vector<ProbMap> out;
    out.reserve(corpus.size());
    for (const TrainItem& item : corpus) {
        ForwardTrace t = forward(item.graph, params, false, 0);
        out.push_back(std::move(t.o));
    }
    return out;
}

GradCheckFixture random_gradcheck_fixture(uint64_t seed) {
    Rng rng(mix_seed(seed, 0x46697874ULL));
    int gw = 3 + rng.uniform_int(4); // 3..6
    int gh = 3 + rng.uniform_int(4);
    int n_classes = 2 + rng.uniform_int(3); // 2..4
    int feat_dim = 6;

    FeatureMap f(gw, gh, feat_dim);
    for (double& v : f.data) v = rng.uniform(0.05, 1.0);
    std::vector<std::array<double, 3>> colors(static_cast<size_t>(gw) * gh);
    for (auto& c : colors) c = {rng.uniform(), rng.uniform(), rng.uniform()};

    GradCheckFixture fx;
    fx.graph = build_graph(f, colors, 2.0, 1e-3);

    fx.labels = LabelMap(gw, gh, LabelMap::kUnknown);
    for (uint8_t& l : fx.labels.data)
        if (rng.uniform() < 0.6) l = static_cast<uint8_t>(rng.uniform_int(n_classes));

    Box box;
    box.cls = 1 + rng.uniform_int(n_classes - 1);
    box.x0 = rng.uniform_int(gw - 1);
    box.y0 = rng.uniform_int(gh - 1);
    box.x1 = box.x0 + 1 + rng.uniform_int(gw - box.x0 - 1) + 1;
    box.y1 = box.y0 + 1 + rng.uniform_int(gh - box.y0 - 1) + 1;
    box.x1 = std::min(box.x1, gw);
    box.y1 = std::min(box.y1, gh);
    fx.boxes.boxes.push_back(box);

    TrainConfig cfg;
    cfg.hidden_dim = 12;
    cfg.n_layers = 3;
    cfg.n_classes = n_classes;
    cfg.seed = mix_seed(seed, 0x50ULL);
    fx.params = init_params(feat_dim, cfg);
    // Break the symmetric init a little so attention logits vary.
    Rng prng(mix_seed(seed, 0x51ULL));
    for (double& w : fx.params.attn_w) w = prng.uniform(0.5, 1.5);
    return fx;
}

} // namespace a2gnn
