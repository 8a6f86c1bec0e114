/* 2-D Jacobi stencil, two sweeps per time step. */
#include <stdio.h>
#include <stdlib.h>

#ifndef N
#define N 512
#endif
#ifndef TSTEPS
#define TSTEPS 40
#endif
#define PAD 128

int main(void)
{
    double *A = malloc(sizeof(double) * (N * N + PAD));
    double *B = malloc(sizeof(double) * (N * N + PAD));
    if (!A || !B)
        return 1;

    for (int i = 0; i < N; i++)
        for (int j = 0; j < N; j++) {
            A[i * N + j] = ((double)i * (j + 2) + 2) / N;
            B[i * N + j] = ((double)i * (j + 3) + 3) / N;
        }

    for (int t = 0; t < TSTEPS; t++) {
        /* mrl:loop L0 */
        for (int i = 1; i < N - 1; i++) {
            /* mrl:loop L1 */
            for (int j = 1; j < N - 1; j++) {
                /* mrl:load &A[(i + 1) * N + j + PF_DIST] */
                B[i * N + j] = 0.2 * (A[i * N + j] + A[i * N + j - 1] + A[i * N + j + 1]
                                      + A[(i + 1) * N + j] + A[(i - 1) * N + j]);
            }
        }
        for (int i = 1; i < N - 1; i++)
            for (int j = 1; j < N - 1; j++)
                A[i * N + j] = 0.2 * (B[i * N + j] + B[i * N + j - 1] + B[i * N + j + 1]
                                      + B[(i + 1) * N + j] + B[(i - 1) * N + j]);
    }

    double sum = 0.0;
    for (int i = 0; i < N * N; i++)
        sum += A[i] * (double)(i % 7 + 1);
    printf("checksum=%.17g\n", sum);
    free(A);
    free(B);
    return 0;
}
