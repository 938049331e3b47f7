#include "posediff/image_io.hpp"

#include "posediff/errors.hpp"

#include <png.h>

#include <cstring>

namespace posediff {

namespace {

png_uint_32 format_for(int channels) {
  switch (channels) {
    case 1: return PNG_FORMAT_GRAY;
    case 3: return PNG_FORMAT_RGB;
    case 4: return PNG_FORMAT_RGBA;
    default: fail(ErrorKind::InvalidInput, "unsupported channel count " + std::to_string(channels));
  }
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image8& image) {
  if (image.data.size() != static_cast<std::size_t>(image.width) * image.height * image.channels)
    fail(ErrorKind::InvalidInput, "image buffer size does not match its dimensions");
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = format_for(image.channels);
  if (!png_image_write_to_file(&png, path.c_str(), 0, image.data.data(), 0, nullptr))
    fail(ErrorKind::Ingestion, "cannot write " + path.string() + ": " + png.message);
}

Image8 read_png(const std::filesystem::path& path, int channels) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    fail(ErrorKind::Ingestion, "cannot read " + path.string() + ": " + png.message);
  png.format = format_for(channels);
  Image8 img;
  img.width = static_cast<int>(png.width);
  img.height = static_cast<int>(png.height);
  img.channels = channels;
  img.data.resize(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, img.data.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    fail(ErrorKind::Ingestion, "cannot decode " + path.string() + ": " + msg);
  }
  return img;
}

}  // namespace posediff
