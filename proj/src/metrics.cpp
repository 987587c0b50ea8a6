#include "msfm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "msfm/errors.hpp"

namespace msfm {

namespace {

double mean_cross_distance(const Array& a, const Array& b) {
    const int m = a.rows(), n = b.rows(), d = a.cols();
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
        const double* pa = a.data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < n; ++j) {
            const double* pb = b.data() + static_cast<std::size_t>(j) * d;
            double s = 0.0;
            for (int k = 0; k < d; ++k) {
                const double diff = pa[k] - pb[k];
                s += diff * diff;
            }
            total += std::sqrt(s);
        }
    }
    return total / (static_cast<double>(m) * static_cast<double>(n));
}

}  // namespace

double energy_distance(const Array& x, const Array& y) {
    if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.cols()) {
        throw ShapeError("energy_distance: need (m,d) and (n,d) sample sets");
    }
    if (x.rows() < 1 || y.rows() < 1) throw ShapeError("energy_distance: empty sample set");
    const double cross = mean_cross_distance(x, y);
    const double within_x = mean_cross_distance(x, x);
    const double within_y = mean_cross_distance(y, y);
    return 2.0 * cross - within_x - within_y;
}

void write_scatter_svg(const std::string& path, const Array& points) {
    if (points.rank() != 2 || points.cols() != 2) {
        throw ShapeError("scatter svg: need (n,2) points, got " + points.shape_str());
    }
    double lo = -1.0, hi = 1.0;
    for (double v : points.values()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi - lo;
    const int size = 480;
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (f == nullptr) throw IoError("cannot open for writing: " + path);
    std::fprintf(f,
                 "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                 "viewBox=\"0 0 %d %d\">\n<rect width=\"%d\" height=\"%d\" fill=\"white\"/>\n",
                 size, size, size, size, size, size);
    for (int i = 0; i < points.rows(); ++i) {
        const double px = (points.at(i, 0) - lo) / span * (size - 20) + 10;
        const double py = (hi - points.at(i, 1)) / span * (size - 20) + 10;
        std::fprintf(f, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"1.6\" fill=\"#1f6fb2\" "
                        "fill-opacity=\"0.6\"/>\n",
                     px, py);
    }
    std::fprintf(f, "</svg>\n");
    std::fclose(f);
}

}  // namespace msfm
