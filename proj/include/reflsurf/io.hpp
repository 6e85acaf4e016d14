// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
// File formats: surfel and point PLY, camera text files, PNG and PFM images.
// The byte-level layouts are documented in docs/FORMATS.md.
//
#pragma once

#include <reflsurf/camera.hpp>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace reflsurf {

/// Unreadable, missing or malformed input. `offset` is the byte position of
/// the fault when it is known.
class IoError : public std::runtime_error {
  public:
    IoError(const std::string &path, const std::string &what,
            std::optional<std::uint64_t> offset = std::nullopt);
    const std::string &path() const { return path_; }
    std::optional<std::uint64_t> offset() const { return offset_; }

  private:
    std::string path_;
    std::optional<std::uint64_t> offset_;
};

std::string readFile(const std::string &path);
/// Writes to a sibling temporary and renames it over `path`.
void writeFileAtomic(const std::string &path, const std::string &bytes);

void saveGaussians(const std::string &path, const GaussianSet &set);
GaussianSet loadGaussians(const std::string &path);
/// In-memory forms of the two calls above.
std::string encodeGaussians(const GaussianSet &set);
GaussianSet decodeGaussians(const std::string &bytes, const std::string &name = "<memory>");

/// Point clouds: PLY with double x, y, z and optional double red, green, blue.
void savePoints(const std::string &path, const std::vector<Vec3> &points,
                const std::vector<Vec3> &colors = {});
void loadPoints(const std::string &path, std::vector<Vec3> &points, std::vector<Vec3> &colors);

void saveCameras(const std::string &path, const std::vector<CameraModel> &cameras);
std::vector<CameraModel> loadCameras(const std::string &path);
std::string encodeCameras(const std::vector<CameraModel> &cameras);
std::vector<CameraModel> decodeCameras(const std::string &text, const std::string &name = "<memory>");

/// 8-bit PNG maps to [0, 1] without any transfer curve. Gray and alpha
/// inputs are expanded to or reduced to RGB.
Image loadPng(const std::string &path);
void savePng(const std::string &path, const Image &image);
/// Float PFM, 1 or 3 channels. Values pass through 32-bit floats.
Image loadPfm(const std::string &path);
void savePfm(const std::string &path, const Image &image);
/// Dispatches on the .png / .pfm extension.
Image loadImage(const std::string &path);
void saveImage(const std::string &path, const Image &image);

/// Normal maps: raw vectors in PFM, (n + 1) / 2 in PNG.
Image normalsToImage(const std::vector<Vec3> &normals, int width, int height, bool encodeUnit);
std::vector<Vec3> imageToNormals(const Image &image, bool encodedUnit);

} // namespace reflsurf
