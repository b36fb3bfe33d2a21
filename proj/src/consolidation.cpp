#include "ddl/consolidation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ddl/errors.hpp"

namespace ddl {

namespace {

constexpr double kInf = std::numeric_limits<double>::max() / 4;

// Potential-based Hungarian (rows <= cols). Returns the minimum total cost.
double solve_rows_le_cols(const std::vector<std::vector<double>>& a) {
    const int n = static_cast<int>(a.size());
    const int m = n ? static_cast<int>(a[0].size()) : 0;
    std::vector<double> u(n + 1, 0), v(m + 1, 0), minv(m + 1);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), kInf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = kInf;
            int j1 = 0;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    double total = 0;
    for (int j = 1; j <= m; ++j)
        if (p[j]) total += a[p[j] - 1][j - 1];
    return total;
}

double assign_min_cost(const std::vector<std::vector<double>>& a) {
    const int r = static_cast<int>(a.size());
    const int c = r ? static_cast<int>(a[0].size()) : 0;
    if (r == 0 || c == 0) return 0.0;
    if (r <= c) return solve_rows_le_cols(a);
    std::vector<std::vector<double>> t(c, std::vector<double>(r));
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) t[j][i] = a[i][j];
    return solve_rows_le_cols(t);
}

std::vector<std::vector<double>> submatrix(const std::vector<std::vector<double>>& a, int first_row,
                                           const std::vector<int>& cols) {
    std::vector<std::vector<double>> s;
    s.reserve(a.size() - first_row);
    for (std::size_t i = first_row; i < a.size(); ++i) {
        std::vector<double> row;
        row.reserve(cols.size());
        for (int c : cols) row.push_back(a[i][c]);
        s.push_back(std::move(row));
    }
    return s;
}

}  // namespace

std::vector<std::pair<int, int>> hungarian(const std::vector<std::vector<double>>& costs) {
    const int rows = static_cast<int>(costs.size());
    const int cols = rows ? static_cast<int>(costs[0].size()) : 0;
    const int k = std::min(rows, cols);
    if (k == 0) return {};

    const double total = assign_min_cost(costs);
    const double tol = 1e-9 * std::max(1.0, std::abs(total));

    // Fix pairs in row-major order, keeping each prefix extendable to an
    // optimal assignment. This yields the lexicographically smallest optimal
    // pair list.
    std::vector<int> avail(cols);
    for (int c = 0; c < cols; ++c) avail[c] = c;
    std::vector<std::pair<int, int>> result;
    double acc = 0;
    int need = k;
    for (int r = 0; r < rows && need > 0; ++r) {
        const int rows_after = rows - r - 1;
        int chosen = -1;
        for (std::size_t ci = 0; ci < avail.size(); ++ci) {
            std::vector<int> rest = avail;
            rest.erase(rest.begin() + static_cast<long>(ci));
            if (std::min(rows_after, static_cast<int>(rest.size())) < need - 1) continue;
            const double sub = assign_min_cost(submatrix(costs, r + 1, rest));
            if (acc + costs[r][avail[ci]] + sub <= total + tol) {
                chosen = static_cast<int>(ci);
                break;
            }
        }
        if (chosen < 0 && rows_after < need)
            chosen = 0;  // fp guard: the row cannot be skipped, take the smallest column
        if (chosen >= 0) {
            acc += costs[r][avail[chosen]];
            result.emplace_back(r, avail[chosen]);
            avail.erase(avail.begin() + chosen);
            --need;
        }
    }
    return result;
}

std::vector<ConsolidatedDetection> rhc(const DetectionSet& anchors,
                                       const std::vector<DetectionSet>& views,
                                       const ConsensusConfig& cfg) {
    if (static_cast<int>(views.size()) != cfg.views)
        throw ConfigError("expected " + std::to_string(cfg.views) + " views, got " +
                          std::to_string(views.size()));
    const std::size_t n = anchors.detections.size();
    std::vector<int> matched(n, 0);
    std::vector<double> iou_sum(n, 0.0);
    for (const auto& view : views) {
        if (view.detections.empty() || n == 0) continue;
        std::vector<std::vector<double>> cost(n, std::vector<double>(view.detections.size()));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < view.detections.size(); ++j)
                cost[i][j] = 1.0 - iou(anchors.detections[i].box, view.detections[j].box);
        for (const auto& [i, j] : hungarian(cost)) {
            const double ov = iou(anchors.detections[i].box, view.detections[j].box);
            if (ov >= cfg.tau) {
                ++matched[i];
                iou_sum[i] += ov;
            }
        }
    }
    std::vector<ConsolidatedDetection> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        ConsolidatedDetection d{anchors.detections[i].box, std::nullopt,
                                anchors.detections[i].label, matched[i], 0.0};
        if (matched[i] > 0) d.mean_match_iou = iou_sum[i] / matched[i];
        d.sigma = cfg.omega1 * (1.0 + matched[i]) / (cfg.views + 1) + cfg.omega2 * d.mean_match_iou;
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<ConsolidatedDetection> consolidate_sa(const std::vector<DetectionSet>& views_with_ref,
                                                  double tau) {
    struct Group {
        double sum[4] = {0, 0, 0, 0};
        int count = 0;
        std::string label;
        BoundingBox centroid() const {
            return {sum[0] / count, sum[1] / count, sum[2] / count, sum[3] / count};
        }
    };
    std::vector<Group> groups;
    for (const auto& view : views_with_ref) {
        for (const auto& det : view.detections) {
            int best = -1;
            double best_iou = tau;
            for (std::size_t g = 0; g < groups.size(); ++g) {
                const double ov = iou(det.box, groups[g].centroid());
                if (ov >= best_iou) {
                    best_iou = ov;
                    best = static_cast<int>(g);
                }
            }
            if (best < 0) {
                groups.push_back(Group{});
                best = static_cast<int>(groups.size()) - 1;
                groups[best].label = det.label;
            }
            auto& g = groups[best];
            g.sum[0] += det.box.x1;
            g.sum[1] += det.box.y1;
            g.sum[2] += det.box.x2;
            g.sum[3] += det.box.y2;
            ++g.count;
        }
    }
    std::vector<ConsolidatedDetection> out;
    out.reserve(groups.size());
    for (const auto& g : groups)
        out.push_back({g.centroid(), std::nullopt, g.label, g.count, 0.0});
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return std::tie(a.box.x1, a.box.y1, a.box.x2, a.box.y2) <
               std::tie(b.box.x1, b.box.y1, b.box.x2, b.box.y2);
    });
    return out;
}

std::vector<ConsolidatedDetection> consolidate_wa(const DetectionSet& anchors,
                                                  const std::vector<DetectionSet>& views,
                                                  const ConsensusConfig& cfg) {
    if (static_cast<int>(views.size()) != cfg.views)
        throw ConfigError("expected " + std::to_string(cfg.views) + " views, got " +
                          std::to_string(views.size()));
    const std::size_t n = anchors.detections.size();
    std::vector<int> matched(n, 0);
    std::vector<double> iou_sum(n, 0.0);
    std::vector<std::array<double, 4>> wsum(n);
    std::vector<double> wtot(n, 1.0);  // anchor itself has weight 1
    for (std::size_t i = 0; i < n; ++i) {
        const auto& b = anchors.detections[i].box;
        wsum[i] = {b.x1, b.y1, b.x2, b.y2};
    }
    for (const auto& view : views) {
        if (view.detections.empty() || n == 0) continue;
        std::vector<std::vector<double>> cost(n, std::vector<double>(view.detections.size()));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < view.detections.size(); ++j)
                cost[i][j] = 1.0 - iou(anchors.detections[i].box, view.detections[j].box);
        for (const auto& [i, j] : hungarian(cost)) {
            const auto& b = view.detections[j].box;
            const double ov = iou(anchors.detections[i].box, b);
            if (ov < cfg.tau) continue;
            ++matched[i];
            iou_sum[i] += ov;
            wsum[i][0] += ov * b.x1;
            wsum[i][1] += ov * b.y1;
            wsum[i][2] += ov * b.x2;
            wsum[i][3] += ov * b.y2;
            wtot[i] += ov;
        }
    }
    std::vector<ConsolidatedDetection> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        BoundingBox box{wsum[i][0] / wtot[i], wsum[i][1] / wtot[i], wsum[i][2] / wtot[i],
                        wsum[i][3] / wtot[i]};
        ConsolidatedDetection d{box, std::nullopt, anchors.detections[i].label, matched[i], 0.0};
        if (matched[i] > 0) d.mean_match_iou = iou_sum[i] / matched[i];
        d.sigma = cfg.omega1 * (1.0 + matched[i]) / (cfg.views + 1) + cfg.omega2 * d.mean_match_iou;
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<ConsolidatedDetection> consolidate_dbscan(const std::vector<DetectionSet>& views_with_ref,
                                                      double eps, int min_pts) {
    std::vector<const Detection*> pool;
    for (const auto& v : views_with_ref)
        for (const auto& d : v.detections) pool.push_back(&d);
    const int n = static_cast<int>(pool.size());
    const int total_views = static_cast<int>(views_with_ref.size());
    if (n == 0) return {};

    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            dist[i][j] = dist[j][i] = 1.0 - iou(pool[i]->box, pool[j]->box);

    auto neighbors = [&](int p) {
        std::vector<int> out;
        for (int q = 0; q < n; ++q)
            if (dist[p][q] <= eps) out.push_back(q);
        return out;
    };

    std::vector<int> cluster(n, -1);  // -1 = noise / unassigned
    int n_clusters = 0;
    std::vector<char> visited(n, 0);
    for (int p = 0; p < n; ++p) {
        if (visited[p]) continue;
        visited[p] = 1;
        auto nb = neighbors(p);
        if (static_cast<int>(nb.size()) < min_pts) continue;
        const int cid = n_clusters++;
        cluster[p] = cid;
        std::vector<int> frontier = nb;
        for (std::size_t i = 0; i < frontier.size(); ++i) {
            const int q = frontier[i];
            if (!visited[q]) {
                visited[q] = 1;
                auto qn = neighbors(q);
                if (static_cast<int>(qn.size()) >= min_pts)
                    frontier.insert(frontier.end(), qn.begin(), qn.end());
            }
            if (cluster[q] < 0) cluster[q] = cid;
        }
    }

    std::vector<ConsolidatedDetection> out;
    for (int cid = 0; cid < n_clusters; ++cid) {
        std::vector<int> members;
        for (int p = 0; p < n; ++p)
            if (cluster[p] == cid) members.push_back(p);
        if (members.empty()) continue;
        auto median_of = [&](auto coord) {
            std::vector<double> vals;
            vals.reserve(members.size());
            for (int p : members) vals.push_back(coord(pool[p]->box));
            std::sort(vals.begin(), vals.end());
            const std::size_t mid = vals.size() / 2;
            return vals.size() % 2 ? vals[mid] : 0.5 * (vals[mid - 1] + vals[mid]);
        };
        BoundingBox box{median_of([](const BoundingBox& b) { return b.x1; }),
                        median_of([](const BoundingBox& b) { return b.y1; }),
                        median_of([](const BoundingBox& b) { return b.x2; }),
                        median_of([](const BoundingBox& b) { return b.y2; })};
        double mean_dist = 0;
        int pairs = 0;
        for (std::size_t i = 0; i < members.size(); ++i)
            for (std::size_t j = i + 1; j < members.size(); ++j) {
                mean_dist += dist[members[i]][members[j]];
                ++pairs;
            }
        if (pairs > 0) mean_dist /= pairs;
        const double conf = 0.5 * static_cast<double>(members.size()) / total_views +
                            0.5 * (1.0 - mean_dist);
        out.push_back({box, conf, pool[members.front()]->label,
                       static_cast<int>(members.size()), 1.0 - mean_dist});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return std::tie(a.box.x1, a.box.y1, a.box.x2, a.box.y2) <
               std::tie(b.box.x1, b.box.y1, b.box.x2, b.box.y2);
    });
    return out;
}

}  // namespace ddl
