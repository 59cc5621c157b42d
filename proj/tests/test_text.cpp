#include <gtest/gtest.h>

#include "asktmk/text.hpp"

using namespace asktmk::text;

TEST(Text, Tokenize) {
  EXPECT_EQ(tokenize("How do you RUN simulation?"),
            (std::vector<std::string>{"how", "do", "you", "run", "simulation"}));
  EXPECT_EQ(tokenize("VERA’s output"), (std::vector<std::string>{"vera’s", "output"}));
  EXPECT_TRUE(tokenize(" ?! ").empty());
}

TEST(Text, TokenRuns) {
  auto hay = tokenize("how do you run a simulation");
  EXPECT_TRUE(contains_token_run(hay, tokenize("run a simulation")));
  EXPECT_FALSE(contains_token_run(hay, tokenize("run simulation")));
  EXPECT_FALSE(contains_token_run(tokenize("several"), tokenize("vera")));
  EXPECT_FALSE(contains_token_run(hay, {}));
}

TEST(Text, FirstSentence) {
  EXPECT_EQ(first_sentence("One two. Three."), "One two.");
  EXPECT_EQ(first_sentence("  Line\nNext"), "Line");
  EXPECT_EQ(first_sentence("No stop"), "No stop");
  EXPECT_EQ(first_sentence(""), "");
}

TEST(Text, Misc) {
  EXPECT_EQ(trim("  a b \n"), "a b");
  EXPECT_EQ(single_line("a\nb\tc"), "a b c");
  EXPECT_EQ(join({"a", "b"}, "; "), "a; b");
  EXPECT_EQ(percent(0.6516), "65.16%");
  EXPECT_EQ(percent(1.0), "100.00%");
}
