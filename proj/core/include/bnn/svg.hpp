#pragma once

#include <string>
#include <vector>

namespace bnn {

/// Minimal static SVG 1.1 line plot: axes, tick labels, one polyline per
/// series, legend. No timestamps or generator tags, so output is a pure
/// function of the data.
class LinePlot {
  public:
    LinePlot(std::string title, std::string xlabel, std::string ylabel)
        : title_(std::move(title)), xlabel_(std::move(xlabel)),
          ylabel_(std::move(ylabel)) {}

    void add_series(std::string name, std::vector<double> xs,
                    std::vector<double> ys);

    void write(const std::string& path) const;

  private:
    struct Series {
        std::string name;
        std::vector<double> xs, ys;
    };

    std::string title_, xlabel_, ylabel_;
    std::vector<Series> series_;
};

}  // namespace bnn
