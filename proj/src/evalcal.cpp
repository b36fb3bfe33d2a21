#include "ddl/evalcal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "ddl/errors.hpp"

namespace ddl {

namespace {

std::string significance_marker(double p) {
    if (p < 0.001) return "***";
    if (p < 0.01) return "**";
    if (p < 0.05) return "*";
    return "ns";
}

double two_sided_t_pvalue(double r, int n) {
    if (n <= 2) return 1.0;
    const double denom = 1.0 - r * r;
    if (denom <= 0) return 0.0;
    const double t = r * std::sqrt((n - 2) / denom);
    const boost::math::students_t dist(n - 2);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

std::optional<double> pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0 || syy <= 0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

std::vector<double> ranks_with_ties(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> rank(n, 0.0);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    return rank;
}

CorrelationStat kendall_tau(const std::vector<double>& x, const std::vector<double>& y) {
    const int n = static_cast<int>(x.size());
    long long concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double dx = x[i] - x[j], dy = y[i] - y[j];
            if (dx == 0 && dy == 0) continue;
            if (dx == 0) {
                ++ties_x;
            } else if (dy == 0) {
                ++ties_y;
            } else if (dx * dy > 0) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    const double n0 = n * (n - 1) / 2.0;
    const double denom = std::sqrt((n0 - ties_x) * (n0 - ties_y));
    CorrelationStat stat;
    stat.value = denom > 0 ? (concordant - discordant) / denom : 0.0;
    const double var = n * (n - 1) * (2.0 * n + 5.0) / 18.0;
    if (var > 0) {
        const double z = (concordant - discordant) / std::sqrt(var);
        const boost::math::normal norm;
        stat.p_value = 2.0 * boost::math::cdf(boost::math::complement(norm, std::abs(z)));
    }
    stat.significance = significance_marker(stat.p_value);
    return stat;
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / (v.size() - 1));
}

KdeCurve kde_curve(const std::vector<double>& scores, const std::string& label) {
    if (scores.size() < 2)
        throw InsufficientData("KDE needs at least 2 points for split '" + label + "'");
    const double sd = sample_std(scores);
    if (sd <= 0)
        throw InsufficientData("KDE bandwidth degenerates (zero variance) for split '" + label + "'");
    const double h = sd * std::pow(static_cast<double>(scores.size()), -0.2);
    const auto [mn, mx] = std::minmax_element(scores.begin(), scores.end());
    KdeCurve curve;
    curve.bandwidth = h;
    curve.label = label;
    const double lo = *mn - 4 * h, hi = *mx + 4 * h;
    const int grid_n = 512;
    const double inv = 1.0 / (scores.size() * h * std::sqrt(2.0 * 3.14159265358979323846));
    for (int i = 0; i < grid_n; ++i) {
        const double x = lo + (hi - lo) * i / (grid_n - 1);
        double density = 0;
        for (double y : scores) {
            const double u = (x - y) / h;
            density += std::exp(-0.5 * u * u);
        }
        curve.grid.push_back(x);
        curve.density.push_back(density * inv);
    }
    return curve;
}

}  // namespace

double average_precision(const std::vector<EvalSample>& samples, double iou_threshold) {
    std::size_t total_gt = 0;
    for (const auto& s : samples) total_gt += s.ground_truth.size();

    struct Pred {
        std::size_t sample;
        const ConsolidatedDetection* det;
        double confidence;
    };
    std::vector<Pred> preds;
    for (std::size_t si = 0; si < samples.size(); ++si)
        for (const auto& d : samples[si].predictions)
            preds.push_back({si, &d, d.sigma.value_or(1.0)});
    if (total_gt == 0) return preds.empty() ? 1.0 : 0.0;
    if (preds.empty()) return 0.0;

    std::stable_sort(preds.begin(), preds.end(),
                     [](const Pred& a, const Pred& b) { return a.confidence > b.confidence; });

    std::vector<std::vector<char>> taken(samples.size());
    for (std::size_t si = 0; si < samples.size(); ++si)
        taken[si].assign(samples[si].ground_truth.size(), 0);

    std::vector<double> precision, recall;
    int tp = 0, fp = 0;
    for (const Pred& p : preds) {
        const auto& gts = samples[p.sample].ground_truth;
        int best = -1;
        double best_iou = iou_threshold;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (taken[p.sample][g]) continue;
            const double ov = iou(p.det->box, gts[g]);
            if (ov >= best_iou) {
                best_iou = ov;
                best = static_cast<int>(g);
            }
        }
        if (best >= 0) {
            taken[p.sample][best] = 1;
            ++tp;
        } else {
            ++fp;
        }
        precision.push_back(static_cast<double>(tp) / (tp + fp));
        recall.push_back(static_cast<double>(tp) / total_gt);
    }

    // Area under the precision envelope (all-point interpolation).
    for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i)
        precision[i] = std::max(precision[i], precision[i + 1]);
    double ap = 0, prev_recall = 0;
    for (std::size_t i = 0; i < recall.size(); ++i) {
        ap += (recall[i] - prev_recall) * precision[i];
        prev_recall = recall[i];
    }
    return ap;
}

std::vector<std::pair<double, double>> sigma_iou_pairs(const std::vector<EvalSample>& samples) {
    std::vector<std::pair<double, double>> pairs;
    for (const auto& s : samples)
        for (const auto& d : s.predictions) {
            if (!d.sigma) continue;
            double best = 0;
            for (const auto& gt : s.ground_truth) best = std::max(best, iou(d.box, gt));
            pairs.emplace_back(*d.sigma, best);
        }
    return pairs;
}

CalibrationReport calibration(const std::vector<std::pair<double, double>>& pairs) {
    CalibrationReport rep;
    rep.n = static_cast<int>(pairs.size());
    if (rep.n == 0) return rep;
    std::vector<double> sig, ov;
    sig.reserve(pairs.size());
    ov.reserve(pairs.size());
    for (const auto& [s, i] : pairs) {
        sig.push_back(s);
        ov.push_back(i);
    }
    rep.mean_sigma = std::accumulate(sig.begin(), sig.end(), 0.0) / rep.n;
    rep.mean_iou = std::accumulate(ov.begin(), ov.end(), 0.0) / rep.n;
    rep.std_sigma = sample_std(sig);
    for (int i = 0; i < rep.n; ++i) rep.mae += std::abs(sig[i] - ov[i]);
    rep.mae /= rep.n;

    if (rep.n >= 3) {
        const auto r = pearson_r(sig, ov);
        if (r) {
            rep.pearson = CorrelationStat{*r, two_sided_t_pvalue(*r, rep.n), ""};
            rep.pearson->significance = significance_marker(rep.pearson->p_value);
        } else {
            rep.degenerate = true;
            rep.pearson = CorrelationStat{0.0, 1.0, "ns"};
        }
        const auto rank_s = ranks_with_ties(sig);
        const auto rank_o = ranks_with_ties(ov);
        const auto rho = pearson_r(rank_s, rank_o);
        if (rho) {
            rep.spearman = CorrelationStat{*rho, two_sided_t_pvalue(*rho, rep.n), ""};
            rep.spearman->significance = significance_marker(rep.spearman->p_value);
        } else {
            rep.spearman = CorrelationStat{0.0, 1.0, "ns"};
        }
        rep.kendall = kendall_tau(sig, ov);
    }

    rep.bins.assign(10, ReliabilityBin{});
    std::vector<std::vector<double>> bin_ious(10);
    for (int b = 0; b < 10; ++b) {
        rep.bins[b].lo = b / 10.0;
        rep.bins[b].hi = (b + 1) / 10.0;
    }
    for (int i = 0; i < rep.n; ++i) {
        const int b = std::min(9, static_cast<int>(sig[i] * 10.0));
        auto& bin = rep.bins[b];
        ++bin.count;
        bin.mean_confidence += sig[i];
        bin.mean_iou += ov[i];
        bin_ious[b].push_back(ov[i]);
    }
    for (int b = 0; b < 10; ++b) {
        auto& bin = rep.bins[b];
        if (bin.count == 0) continue;
        bin.mean_confidence /= bin.count;
        bin.mean_iou /= bin.count;
        bin.ci_halfwidth = 1.96 * sample_std(bin_ious[b]) / std::sqrt(bin.count);
    }
    return rep;
}

std::vector<KdeCurve> kde(const std::vector<double>& scores, KdeSplit split) {
    if (scores.size() < 2) throw InsufficientData("KDE needs at least 2 scores");
    std::vector<KdeCurve> out;
    out.push_back(kde_curve(scores, "All"));
    if (split == KdeSplit::Median) {
        std::vector<double> sorted = scores;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t half = sorted.size() / 2;
        std::vector<double> bad(sorted.begin(), sorted.begin() + half);
        std::vector<double> good(sorted.begin() + half, sorted.end());
        out.push_back(kde_curve(good, "Good"));
        out.push_back(kde_curve(bad, "Bad"));
    }
    return out;
}

std::vector<MetricDelta> improvement_table(
    const std::vector<std::tuple<std::string, double, double>>& rows) {
    std::vector<MetricDelta> out;
    for (const auto& [name, baseline, treated] : rows) {
        MetricDelta d{name, baseline, treated, std::nullopt};
        if (baseline > 0) d.delta_pct = 100.0 * (treated - baseline) / baseline;
        out.push_back(std::move(d));
    }
    return out;
}

std::string render_delta(const MetricDelta& d) {
    char buf[128];
    if (d.delta_pct)
        std::snprintf(buf, sizeof(buf), "%s: %.3f -> %.3f (%+.1f%%)", d.name.c_str(), d.baseline,
                      d.treated, *d.delta_pct);
    else
        std::snprintf(buf, sizeof(buf), "%s: %.3f -> %.3f (undefined)", d.name.c_str(), d.baseline,
                      d.treated);
    return buf;
}

}  // namespace ddl
