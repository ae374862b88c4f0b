#include <iostream>
int main() { std::cout << "cinetab\n"; return 0; }
