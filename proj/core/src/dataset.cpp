#include "vitfreeze/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "vitfreeze/model.hpp"
#include "vitfreeze/rng.hpp"

namespace vitfreeze {

Tensor synth_image(uint64_t seed, int64_t channels, int64_t height, int64_t width) {
    require(channels >= 1 && height >= 1 && width >= 1, "synth_image: bad dimensions");
    Rng rng(derive_seed(seed, 0x1a6e5));
    Tensor img({channels, height, width});

    // Base: one smooth oriented ramp per channel.
    for (int64_t c = 0; c < channels; ++c) {
        const double theta = rng.uniform(0.0, M_PI);
        const double dx = std::cos(theta), dy = std::sin(theta);
        const double freq = rng.uniform(0.5, 2.0) * M_PI / static_cast<double>(std::max(height, width));
        const double phase = rng.uniform(0.0, 2.0 * M_PI);
        const double amp = rng.uniform(0.25, 0.5);
        for (int64_t y = 0; y < height; ++y) {
            for (int64_t x = 0; x < width; ++x) {
                const double u = dx * static_cast<double>(x) + dy * static_cast<double>(y);
                img.data[static_cast<size_t>(c * height * width + y * width + x)] =
                    0.5 + amp * std::sin(freq * u * 2.0 + phase);
            }
        }
    }

    // Oriented bars: hard-edged stripes across all channels.
    const int num_bars = 2 + static_cast<int>(rng.below(3));
    for (int b = 0; b < num_bars; ++b) {
        const double theta = rng.uniform(0.0, M_PI);
        const double nx = std::cos(theta), ny = std::sin(theta);
        const double offset = rng.uniform(0.0, static_cast<double>(height + width));
        const double half_width = rng.uniform(1.5, 4.0);
        const double level = rng.uniform(0.0, 1.0);
        for (int64_t y = 0; y < height; ++y) {
            for (int64_t x = 0; x < width; ++x) {
                const double d =
                    nx * static_cast<double>(x) + ny * static_cast<double>(y) - offset;
                if (std::abs(d) < half_width) {
                    for (int64_t c = 0; c < channels; ++c) {
                        double& p =
                            img.data[static_cast<size_t>(c * height * width + y * width + x)];
                        p = 0.35 * p + 0.65 * level;
                    }
                }
            }
        }
    }

    // Soft blobs: local gaussian bumps, channel-tinted.
    const int num_blobs = 2 + static_cast<int>(rng.below(3));
    for (int b = 0; b < num_blobs; ++b) {
        const double cx = rng.uniform(0.0, static_cast<double>(width));
        const double cy = rng.uniform(0.0, static_cast<double>(height));
        const double sigma = rng.uniform(2.0, static_cast<double>(std::min(height, width)) / 4.0);
        const double gain = rng.uniform(-0.45, 0.45);
        std::vector<double> tint(static_cast<size_t>(channels));
        for (double& t : tint) t = rng.uniform(0.5, 1.0);
        for (int64_t y = 0; y < height; ++y) {
            for (int64_t x = 0; x < width; ++x) {
                const double r2 = (static_cast<double>(x) - cx) * (static_cast<double>(x) - cx) +
                                  (static_cast<double>(y) - cy) * (static_cast<double>(y) - cy);
                const double g = gain * std::exp(-r2 / (2.0 * sigma * sigma));
                if (std::abs(g) < 1e-4) continue;
                for (int64_t c = 0; c < channels; ++c) {
                    img.data[static_cast<size_t>(c * height * width + y * width + x)] +=
                        g * tint[static_cast<size_t>(c)];
                }
            }
        }
    }

    for (double& p : img.data) p = std::clamp(p, 0.0, 1.0);
    return img;
}

std::vector<Tensor> synth_dataset(uint64_t seed, int64_t count, int64_t channels, int64_t height,
                                  int64_t width) {
    require(count >= 1, "synth_dataset: count must be >= 1");
    std::vector<Tensor> out;
    out.reserve(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) {
        out.push_back(synth_image(derive_seed(seed, static_cast<uint64_t>(i)), channels, height,
                                  width));
    }
    return out;
}

namespace {

// Reads one whitespace-delimited token, skipping '#' comment lines.
std::string ppm_token(std::istream& in, const std::string& path) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    if (tok.empty()) throw IoError(path + ": truncated PPM header");
    return tok;
}

int64_t ppm_int(std::istream& in, const std::string& path, const char* what) {
    const std::string tok = ppm_token(in, path);
    try {
        size_t pos = 0;
        const int64_t v = std::stoll(tok, &pos);
        if (pos != tok.size() || v < 0) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw IoError(path + ": bad PPM " + what + " field: \"" + tok + "\"");
    }
}

}  // namespace

Tensor load_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image file: " + path);
    const std::string magic = ppm_token(in, path);
    if (magic != "P6") {
        throw IoError(path + ": unsupported format \"" + magic + "\" (only binary P6 supported)");
    }
    const int64_t w = ppm_int(in, path, "width");
    const int64_t h = ppm_int(in, path, "height");
    const int64_t maxval = ppm_int(in, path, "maxval");
    if (w < 1 || h < 1) throw IoError(path + ": bad PPM dimensions");
    if (maxval < 1 || maxval > 255) {
        throw IoError(path + ": unsupported PPM maxval " + std::to_string(maxval) +
                      " (8-bit only)");
    }
    // Exactly one whitespace byte separates the header from pixel data; the
    // token reader has already consumed it.
    std::vector<unsigned char> raw(static_cast<size_t>(3 * w * h));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
        throw IoError(path + ": truncated PPM pixel data");
    }
    Tensor img({3, h, w});
    // exact division (not a reciprocal multiply) so byte k maps to precisely
    // the double k/maxval and quantized round-trips are bit-exact
    const double mv = static_cast<double>(maxval);
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            for (int64_t c = 0; c < 3; ++c) {
                img.data[static_cast<size_t>(c * h * w + y * w + x)] =
                    static_cast<double>(raw[static_cast<size_t>((y * w + x) * 3 + c)]) / mv;
            }
        }
    }
    return img;
}

void write_ppm(const Tensor& image, const std::string& path) {
    require(image.rank() == 3 && image.shape[0] == 3,
            "write_ppm: expected [3,H,W], got " + shape_str(image.shape));
    const int64_t h = image.shape[1], w = image.shape[2];
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image file: " + path);
    out << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> raw(static_cast<size_t>(3 * w * h));
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            for (int64_t c = 0; c < 3; ++c) {
                const double v = std::clamp(image.data[static_cast<size_t>(c * h * w + y * w + x)],
                                            0.0, 1.0);
                raw[static_cast<size_t>((y * w + x) * 3 + c)] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }
        }
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError("failed writing image file: " + path);
}

std::vector<Tensor> load_image_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("image source is not a directory: " + dir);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file()) files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("image directory is empty: " + dir);
    std::vector<Tensor> out;
    out.reserve(files.size());
    for (const std::string& f : files) {
        Tensor img = load_ppm(f);
        if (!out.empty() && img.shape != out.front().shape) {
            throw IoError(f + ": image size " + shape_str(img.shape) +
                          " differs from first image " + shape_str(out.front().shape));
        }
        out.push_back(std::move(img));
    }
    return out;
}

std::vector<PreparedImage> prepare_images(const std::vector<Tensor>& images, int64_t patch_size,
                                          const std::vector<int64_t>& scales,
                                          const HogConfig& hog) {
    std::vector<PreparedImage> out;
    out.reserve(images.size());
    for (const Tensor& img : images) {
        PreparedImage p;
        p.patches = patchify(img, patch_size);
        p.targets = build_targets(img, scales, hog);
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace vitfreeze
