/* y = A^T (A x), repeated. The row dot product is left unmarked; the marked
 * loop is the reduction-free accumulation into y. */
#include <stdio.h>
#include <stdlib.h>

#ifndef N
#define N 1600
#endif
#ifndef REPS
#define REPS 8
#endif
#define PAD 128

int main(void)
{
    double *A = malloc(sizeof(double) * (N * N + PAD));
    double *x = malloc(sizeof(double) * (N + PAD));
    double *y = malloc(sizeof(double) * (N + PAD));
    if (!A || !x || !y)
        return 1;

    for (int i = 0; i < N; i++) {
        x[i] = 1.0 + (double)i / N;
        y[i] = 0.0;
        for (int j = 0; j < N; j++)
            A[i * N + j] = (double)((i + j) % N) / (5.0 * N);
    }

    for (int r = 0; r < REPS; r++) {
        /* mrl:loop L0 */
        for (int i = 0; i < N; i++) {
            double tmp = 0.0;
            for (int j = 0; j < N; j++)
                tmp += A[i * N + j] * x[j];
            /* mrl:loop L1 */
            for (int j = 0; j < N; j++) {
                /* mrl:load &A[i * N + j + PF_DIST] */
                y[j] += A[i * N + j] * tmp;
            }
        }
    }

    double sum = 0.0;
    for (int i = 0; i < N; i++)
        sum += y[i] * (double)(i % 3 + 1);
    printf("checksum=%.17g\n", sum);
    free(A);
    free(x);
    free(y);
    return 0;
}
