#include <cstdio>

int main() {
  std::puts("pdan cli placeholder");
  return 0;
}
