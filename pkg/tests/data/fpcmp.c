#include <stdio.h>

static int le(double a, double b) { return a <= b; }

static long to_fixed(double x) { return (long)(x * 65536.0); }

int main(int argc, char **argv)
{
    double acc = argc;
    float f = 0.5f * argc;
    int hits = 0;
    for (int i = 0; i < 10; i++) {
        acc = acc * 1.1 + f;
        hits += le(acc, 7.0 + i);
        f = (float)acc / 3.0f;
    }
    printf("%d %ld %f\n", hits, to_fixed(acc), (double)f);
    return 0;
}
