#include "sqlcascade/synthetic.hpp"

#include <array>
#include <random>
#include <string>
#include <vector>

#include "sqlcascade/rng.hpp"

namespace sqlcascade {

namespace {

using Rng = std::mt19937_64;

template <std::size_t N>
const char* pick(Rng& rng, const std::array<const char*, N>& items) {
  return items[uniform_below(rng, N)];
}

bool chance(Rng& rng, double p) { return uniform_unit(rng) < p; }

std::string number(Rng& rng, std::uint64_t hi = 1000) {
  return std::to_string(uniform_below(rng, hi));
}

constexpr std::array kTables = {"users",    "orders",   "products", "customers", "accounts",
                                "sessions", "invoices", "employees", "payments", "logs",
                                "items",    "reviews",  "inventory", "members",  "tickets"};
constexpr std::array kColumns = {"id",     "name",   "email",  "price",   "status", "created_at",
                                 "amount", "title",  "city",   "country", "age",    "quantity",
                                 "user_id", "order_id", "password", "username", "total", "rating"};
constexpr std::array kFirstNames = {"John",  "Mary", "Ahmed", "Li",     "Sofia", "Liam",
                                    "Emma",  "Noah", "Olivia", "Mateo", "Aisha", "Kenji",
                                    "Fatma", "Ivan", "Chloe",  "Sean",  "Priya", "Lucas"};
constexpr std::array kLastNames = {"Smith", "O'Brien", "Garcia", "Chen",  "D'Angelo", "Novak",
                                   "Kaya",  "Müller",  "Silva",  "O'Neil", "Tanaka", "Brown",
                                   "Dubois", "Kowalski", "Nguyen", "Rossi", "Yilmaz", "Walsh"};
constexpr std::array kWords = {"order",   "select",  "update", "new",    "report",  "from",
                               "the",     "best",    "price",  "union",  "station", "drop",
                               "and",     "or",      "table",  "where",  "delete",  "insert",
                               "account", "summer",  "sale",   "shipping", "free",  "delivery",
                               "help",    "contact", "login",  "password", "reset", "weekly",
                               "meeting", "notes",   "quick",  "brown",  "fox",     "jumps",
                               "server",  "status",  "invoice", "paid",  "pending", "review"};
constexpr std::array kDomains = {"example.com", "mail.org", "corp.net", "uni.edu", "shop.io"};
constexpr std::array kFuncs = {"count(*)", "max(price)", "sum(amount)", "avg(rating)", "min(id)"};

std::string table(Rng& rng) { return pick(rng, kTables); }
std::string column(Rng& rng) { return pick(rng, kColumns); }

std::string keyword_case(Rng& rng, std::string kw) {
  if (chance(rng, 0.35)) {
    for (auto& c : kw) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
  }
  return kw;
}

std::string literal(Rng& rng) {
  switch (uniform_below(rng, 4)) {
    case 0:
      return number(rng, 100000);
    case 1:
      return std::string("'") + pick(rng, kWords) + "'";
    case 2:
      return std::string("'") + pick(rng, kFirstNames) + "'";
    default:
      return "'" + number(rng, 2030) + "-0" + std::to_string(1 + uniform_below(rng, 9)) + "-1" +
             std::to_string(uniform_below(rng, 10)) + "'";
  }
}

std::string condition(Rng& rng) {
  static constexpr std::array kOps = {" = ", " > ", " < ", " >= ", " <> ", " LIKE "};
  std::string op = pick(rng, kOps);
  std::string rhs = literal(rng);
  if (op == " LIKE ") rhs = std::string("'%") + pick(rng, kWords) + "%'";
  std::string out = column(rng) + op + rhs;
  if (chance(rng, 0.35)) {
    out += keyword_case(rng, chance(rng, 0.5) ? " AND " : " OR ") + column(rng) + " = " + literal(rng);
  }
  return out;
}

std::string benign_sql(Rng& rng) {
  switch (uniform_below(rng, 7)) {
    case 0:
    case 1: {
      std::string cols = chance(rng, 0.3) ? "*" : column(rng) + ", " + column(rng);
      std::string q = keyword_case(rng, "SELECT ") + cols + keyword_case(rng, " FROM ") + table(rng);
      if (chance(rng, 0.8)) q += keyword_case(rng, " WHERE ") + condition(rng);
      if (chance(rng, 0.3)) q += keyword_case(rng, " ORDER BY ") + column(rng) + (chance(rng, 0.5) ? " DESC" : "");
      if (chance(rng, 0.25)) q += keyword_case(rng, " LIMIT ") + number(rng, 100);
      return q;
    }
    case 2:
      return keyword_case(rng, "INSERT INTO ") + table(rng) + " (" + column(rng) + ", " + column(rng) +
             keyword_case(rng, ") VALUES (") + literal(rng) + ", " + literal(rng) + ")";
    case 3:
      return keyword_case(rng, "UPDATE ") + table(rng) + keyword_case(rng, " SET ") + column(rng) + " = " +
             literal(rng) + keyword_case(rng, " WHERE ") + column(rng) + " = " + number(rng);
    case 4:
      return keyword_case(rng, "DELETE FROM ") + table(rng) + keyword_case(rng, " WHERE ") + condition(rng);
    case 5:
      return keyword_case(rng, "SELECT ") + pick(rng, kFuncs) + keyword_case(rng, " FROM ") + table(rng) +
             keyword_case(rng, " GROUP BY ") + column(rng);
    default:
      return keyword_case(rng, "SELECT ") + column(rng) + keyword_case(rng, " FROM ") + table(rng) +
             keyword_case(rng, " UNION SELECT ") + column(rng) + keyword_case(rng, " FROM ") + table(rng);
  }
}

std::string sentence(Rng& rng, std::size_t min_words, std::size_t max_words) {
  const auto n = min_words + uniform_below(rng, max_words - min_words + 1);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += pick(rng, kWords);
  }
  return out;
}

std::string benign_value(Rng& rng) {
  switch (uniform_below(rng, 9)) {
    case 0:
      return std::string(pick(rng, kFirstNames)) + " " + pick(rng, kLastNames);
    case 1: {
      std::string user = pick(rng, kFirstNames);
      for (auto& c : user) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      }
      return user + (chance(rng, 0.5) ? "." : "_") + number(rng, 99) + "@" + pick(rng, kDomains);
    }
    case 2:
      return number(rng, 1000000);
    case 3:
      return sentence(rng, 2, 9);
    case 4: {
      // prose with punctuation that also shows up in injections
      std::string s = sentence(rng, 3, 7);
      static constexpr std::array kTails = {" -- thanks", "'s update", " (draft)", "; see notes",
                                            " = done", " it's fine", " 50% off!", " #1 pick"};
      return s + pick(rng, kTails);
    }
    case 5:
      return "https://www." + std::string(pick(rng, kDomains)) + "/" + pick(rng, kWords) +
             "?id=" + number(rng);
    case 6:
      return number(rng, 2030) + "/" + number(rng, 12) + "/" + number(rng, 28);
    case 7:
      return std::string(pick(rng, kLastNames)) + ", " + pick(rng, kFirstNames);
    default:
      return std::string(pick(rng, kWords)) + number(rng, 10000);
  }
}

std::string spaces(Rng& rng) {
  switch (uniform_below(rng, 6)) {
    case 0:
      return "  ";
    case 1:
      return "/**/";
    default:
      return " ";
  }
}

std::string quote(Rng& rng) { return chance(rng, 0.8) ? "'" : "\""; }

std::string comment(Rng& rng) {
  static constexpr std::array kComments = {"--", "-- ", "#", "/*", "--+", ";--", ""};
  return pick(rng, kComments);
}

std::string tautology(Rng& rng) {
  const auto a = number(rng, 100);
  const std::string q = quote(rng);
  const std::string s = spaces(rng);
  switch (uniform_below(rng, 7)) {
    case 0:
      return q + s + keyword_case(rng, "OR") + s + a + "=" + a + s + comment(rng);
    case 1:
      return q + s + keyword_case(rng, "OR") + s + q + a + q + "=" + q + a;
    case 2:
      return std::string(pick(rng, kWords)) + q + s + comment(rng);
    case 3:
      return a + s + keyword_case(rng, "OR") + s + a + "=" + a;
    case 4:
      return q + s + keyword_case(rng, "OR") + s + keyword_case(rng, "TRUE") + comment(rng);
    case 5:
      return q + ") " + keyword_case(rng, "OR") + " (" + q + "x" + q + "=" + q + "x";
    default:
      return "admin" + q + s + keyword_case(rng, "OR") + s + q + "1" + q + "=" + q + "1" + comment(rng);
  }
}

std::string union_attack(Rng& rng) {
  const std::string s = spaces(rng);
  std::string cols;
  const auto n = 1 + uniform_below(rng, 5);
  for (std::size_t i = 0; i < n; ++i) {
    if (i) cols += ",";
    cols += chance(rng, 0.5) ? keyword_case(rng, "NULL") : (chance(rng, 0.5) ? number(rng, 10) : column(rng));
  }
  std::string prefix = chance(rng, 0.6) ? quote(rng) : number(rng);
  std::string out = prefix + s + keyword_case(rng, chance(rng, 0.3) ? "UNION ALL SELECT" : "UNION SELECT") + s + cols;
  if (chance(rng, 0.6)) out += s + keyword_case(rng, "FROM") + s + (chance(rng, 0.3) ? "information_schema.tables" : table(rng));
  return out + s + comment(rng);
}

std::string stacked_attack(Rng& rng) {
  switch (uniform_below(rng, 4)) {
    case 0:
      return number(rng) + "; " + keyword_case(rng, "DROP TABLE ") + table(rng) + comment(rng);
    case 1:
      return quote(rng) + "; " + keyword_case(rng, "EXEC xp_cmdshell") + "('" + pick(rng, kWords) + "')" + comment(rng);
    case 2:
      return quote(rng) + "; " + keyword_case(rng, "INSERT INTO ") + table(rng) + keyword_case(rng, " VALUES ") +
             "(" + literal(rng) + ")" + comment(rng);
    default:
      return quote(rng) + "; " + keyword_case(rng, "UPDATE ") + table(rng) + keyword_case(rng, " SET ") +
             "password='" + pick(rng, kWords) + "'" + comment(rng);
  }
}

std::string blind_attack(Rng& rng) {
  const std::string s = spaces(rng);
  switch (uniform_below(rng, 5)) {
    case 0:
      return number(rng) + s + keyword_case(rng, "AND SLEEP(") + number(rng, 10) + ")";
    case 1:
      return quote(rng) + s + keyword_case(rng, "WAITFOR DELAY") + " '0:0:" + number(rng, 10) + "'" + comment(rng);
    case 2:
      return quote(rng) + s + keyword_case(rng, "AND ASCII(SUBSTRING((SELECT ") + column(rng) +
             keyword_case(rng, " FROM ") + table(rng) + " LIMIT 1)," + number(rng, 9) + ",1))>" + number(rng, 128) + comment(rng);
    case 3:
      return number(rng) + s + keyword_case(rng, "AND") + s + number(rng, 9) + "=" + number(rng, 9);
    default:
      return quote(rng) + s + keyword_case(rng, "AND BENCHMARK(") + number(rng, 5000000) + ",MD5(1))" + comment(rng);
  }
}

std::string error_attack(Rng& rng) {
  switch (uniform_below(rng, 3)) {
    case 0:
      return quote(rng) + keyword_case(rng, " AND EXTRACTVALUE(1,CONCAT(0x7e,(SELECT ") +
             (chance(rng, 0.5) ? "user()" : "version()") + ")))" + comment(rng);
    case 1:
      return number(rng) + keyword_case(rng, " AND 1=CONVERT(int,@@version)") + comment(rng);
    default:
      return quote(rng) + keyword_case(rng, " AND UPDATEXML(1,CONCAT(0x7e,(SELECT database())),1)") + comment(rng);
  }
}

std::string obfuscated_attack(Rng& rng) {
  switch (uniform_below(rng, 4)) {
    case 0:
      return "%27%20" + keyword_case(rng, "OR") + "%201%3D1%20--";
    case 1:
      return quote(rng) + " " + keyword_case(rng, "UN/**/ION SEL/**/ECT ") + column(rng) + "," + column(rng) +
             keyword_case(rng, " FR/**/OM ") + table(rng) + "--";
    case 2:
      return keyword_case(rng, "CHAR(") + number(rng, 128) + ")+" + keyword_case(rng, "CHAR(") + number(rng, 128) + ")" +
             keyword_case(rng, " OR ") + "1=1";
    default:
      return quote(rng) + " || (" + keyword_case(rng, "SELECT ") + pick(rng, kFuncs) + keyword_case(rng, " FROM ") +
             table(rng) + ") || " + quote(rng);
  }
}

std::string attack(Rng& rng) {
  std::string core;
  const auto roll = uniform_below(rng, 100);
  if (roll < 32) {
    core = tautology(rng);
  } else if (roll < 52) {
    core = union_attack(rng);
  } else if (roll < 64) {
    core = stacked_attack(rng);
  } else if (roll < 80) {
    core = blind_attack(rng);
  } else if (roll < 90) {
    core = error_attack(rng);
  } else {
    core = obfuscated_attack(rng);
  }
  // injections often ride inside an otherwise benign statement or value
  if (chance(rng, 0.25)) {
    return keyword_case(rng, "SELECT * FROM ") + table(rng) + keyword_case(rng, " WHERE ") + column(rng) +
           " = '" + pick(rng, kWords) + core;
  }
  if (chance(rng, 0.15)) return std::string(pick(rng, kFirstNames)) + core;
  return core;
}

}  // namespace

LabeledCorpus generate_sqli_corpus(const SynthOptions& options) {
  Rng rng(options.seed);
  std::vector<std::string> payloads;
  std::vector<int> labels;
  const std::size_t total = options.positives + options.negatives;
  payloads.reserve(total);
  labels.reserve(total);
  for (std::size_t i = 0; i < options.positives; ++i) {
    payloads.push_back(attack(rng));
    labels.push_back(1);
  }
  for (std::size_t i = 0; i < options.negatives; ++i) {
    payloads.push_back(chance(rng, 0.55) ? benign_sql(rng) : benign_value(rng));
    labels.push_back(0);
  }
  // flipping in matched pairs keeps the class counts exact
  const auto flips = static_cast<std::size_t>(options.label_noise * static_cast<double>(total) / 2.0);
  for (std::size_t k = 0; k < flips && options.positives > 0 && options.negatives > 0; ++k) {
    const auto p = uniform_below(rng, options.positives);
    const auto n = options.positives + uniform_below(rng, options.negatives);
    std::swap(labels[p], labels[n]);
  }
  auto order = shuffled_indices(total, rng);
  std::vector<std::string> shuffled_payloads;
  std::vector<int> shuffled_labels;
  shuffled_payloads.reserve(total);
  shuffled_labels.reserve(total);
  for (auto i : order) {
    shuffled_payloads.push_back(std::move(payloads[i]));
    shuffled_labels.push_back(labels[i]);
  }
  return LabeledCorpus(std::move(shuffled_payloads), std::move(shuffled_labels),
                       "synthetic:seed=" + std::to_string(options.seed));
}

}  // namespace sqlcascade
