#include "curate/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <map>
#include <thread>

#include "curate/error.hpp"
#include "httplib.h"

namespace curate {

namespace {

std::string id_string(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw CatalogError("id field is neither string nor integer");
}

std::string string_or_empty(const Json& obj, const char* key) {
  auto it = obj.find(key);
  return it != obj.end() && it->is_string() ? it->get<std::string>() : std::string();
}

struct PageResult {
  std::string body;
};

PageResult fetch_page(const CatalogQuery& q, int offset) {
  httplib::Params params{{"format", "json"}, {"offset", std::to_string(offset)}, {"limit", std::to_string(q.page_size)}};
  if (!q.language.empty()) params.emplace("language", q.language);
  std::string last_error;
  auto delay = q.backoff;
  for (int attempt = 0; attempt < std::max(1, q.max_retries); ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    httplib::Client client(q.base_url);
    client.set_connection_timeout(q.timeout);
    client.set_read_timeout(q.timeout);
    auto res = client.Get(q.path, params, httplib::Headers{});
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) return {std::move(res->body)};
    if (res->status >= 500 || res->status == 429) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    throw CatalogError("catalog request at offset " + std::to_string(offset) + " failed with HTTP " +
                       std::to_string(res->status));
  }
  throw CatalogError("catalog request at offset " + std::to_string(offset) + " failed after " +
                     std::to_string(q.max_retries) + " attempts: " + last_error);
}

}  // namespace

std::vector<CatalogEntry> parse_catalog_page(const std::string& body, std::vector<std::string>& warnings) {
  Json page;
  try {
    page = Json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw CatalogError(std::string("malformed catalog JSON: ") + e.what());
  }
  if (!page.is_object() || !page.contains("books") || !page["books"].is_array())
    throw CatalogError("catalog page has no 'books' array");
  std::vector<CatalogEntry> out;
  for (const auto& b : page["books"]) {
    CatalogEntry e;
    try {
      e.book_id = id_string(b.at("id"));
    } catch (const nlohmann::json::exception&) {
      throw CatalogError("catalog book without id");
    }
    e.title = string_or_empty(b, "title");
    e.language = string_or_empty(b, "language");
    if (auto s = b.find("sections"); s != b.end() && s->is_array()) {
      for (const auto& sec : *s) {
        CatalogChapter c;
        c.chapter_id = sec.contains("id") ? id_string(sec["id"]) : "";
        c.title = string_or_empty(sec, "title");
        c.audio_url = string_or_empty(sec, "listen_url");
        if (auto r = sec.find("readers"); r != sec.end() && r->is_array())
          for (const auto& reader : *r)
            if (reader.contains("reader_id")) c.reader_ids.push_back(id_string(reader["reader_id"]));
        if (c.chapter_id.empty() || c.audio_url.empty()) {
          warnings.push_back("book " + e.book_id + ": skipped section '" + c.chapter_id + "' without audio URL");
          continue;
        }
        if (c.reader_ids.empty()) {
          warnings.push_back("book " + e.book_id + ": skipped section " + c.chapter_id + " without reader");
          continue;
        }
        e.chapters.push_back(std::move(c));
      }
    }
    if (e.chapters.empty()) {
      warnings.push_back("book " + e.book_id + ": skipped, no usable chapters");
      continue;
    }
    out.push_back(std::move(e));
  }
  return out;
}

CatalogResult fetch_catalog(const CatalogQuery& q) {
  if (q.page_size <= 0) throw CatalogError("page_size must be positive");
  CatalogResult res;
  std::map<std::string, CatalogEntry> books;
  const int inflight = std::max(1, q.concurrency);
  bool done = false;
  for (int next = 0; !done; next += inflight * q.page_size) {
    std::vector<std::future<PageResult>> pages;
    for (int k = 0; k < inflight; ++k)
      pages.push_back(std::async(std::launch::async, fetch_page, std::cref(q), next + k * q.page_size));
    std::vector<PageResult> bodies;
    for (auto& f : pages) bodies.push_back(f.get());
    for (const auto& page : bodies) {
      if (done) break;
      ++res.pages;
      // Count raw rows so pages whose books were all skipped still advance pagination.
      std::size_t rows = 0;
      try {
        rows = Json::parse(page.body).value("books", Json::array()).size();
      } catch (const nlohmann::json::exception&) {
        throw CatalogError("malformed catalog JSON");
      }
      for (auto& e : parse_catalog_page(page.body, res.warnings)) books.emplace(e.book_id, std::move(e));
      if (rows < static_cast<std::size_t>(q.page_size)) done = true;
    }
  }
  for (auto& [id, e] : books) res.entries.push_back(std::move(e));
  return res;
}

std::set<std::string> read_exclusions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open exclusion list " + path.string());
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    out.insert(line.substr(b, e - b + 1));
  }
  return out;
}

ExclusionResult apply_exclusions(std::vector<CatalogEntry> entries, const std::set<std::string>& excluded) {
  ExclusionResult res;
  for (auto& e : entries) {
    const auto before = e.chapters.size();
    std::erase_if(e.chapters, [&](const CatalogChapter& c) {
      return std::any_of(c.reader_ids.begin(), c.reader_ids.end(), [&](const auto& r) { return excluded.contains(r); });
    });
    res.removed_chapters += before - e.chapters.size();
    if (e.chapters.empty()) {
      ++res.removed_books;
      continue;
    }
    res.entries.push_back(std::move(e));
  }
  return res;
}

std::vector<ChapterRecord> to_chapter_records(std::span<const CatalogEntry> entries, const std::string& audio_dir,
                                              const std::string& extension) {
  std::vector<ChapterRecord> out;
  for (const auto& e : entries) {
    for (const auto& c : e.chapters) {
      ChapterRecord r;
      r.chapter_id = c.chapter_id;
      r.book_id = e.book_id;
      r.speaker_id = c.reader_ids.front();
      r.audio_path = (std::filesystem::path(audio_dir) / (c.chapter_id + extension)).generic_string();
      r.extra["audio_url"] = c.audio_url;
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::string download_list(std::span<const CatalogEntry> entries) {
  std::string out;
  for (const auto& e : entries)
    for (const auto& c : e.chapters) out += c.chapter_id + "\t" + c.audio_url + "\n";
  return out;
}

Json to_json(const CatalogEntry& e) {
  Json j = Json::object();
  j["book_id"] = e.book_id;
  j["title"] = e.title;
  j["language"] = e.language;
  Json chapters = Json::array();
  for (const auto& c : e.chapters)
    chapters.push_back({{"chapter_id", c.chapter_id}, {"title", c.title}, {"audio_url", c.audio_url}, {"reader_ids", c.reader_ids}});
  j["chapters"] = std::move(chapters);
  return j;
}

}  // namespace curate
