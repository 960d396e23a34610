/* Integer SUSAN-style smoothing, edge and corner detection over a generated
 * image.  usage: susan [size] [passes]
 * With no arguments, reads "size passes" from the file named by FLAGFORGE_DATASET. */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

typedef struct {
  int n;
  int radius;
  int thresh;
  unsigned char lut[516];
} params_t;

static unsigned lcg_state = 12345u;

static unsigned lcg(void) {
  lcg_state = lcg_state * 1103515245u + 12345u;
  return (lcg_state >> 16) & 0x7fffu;
}

static void make_image(unsigned char *img, int n) {
  for (int y = 0; y < n; y++)
    for (int x = 0; x < n; x++) {
      int v = ((x / 24 + y / 24) & 1) ? 190 : 60;
      int cx = x - n / 2, cy = y - n / 3;
      if (cx * cx + cy * cy < n * n / 16) v = 125;
      if (x > n / 8 && x < n / 4 && y > n / 2 && y < 3 * n / 4) v = 230;
      img[y * n + x] = (unsigned char)(v + (int)(lcg() % 9) - 4);
    }
}

/* similarity 100 / (1 + (k/t)^6) */
static void setup_lut(params_t *p) {
  long long t6 = (long long)p->thresh * p->thresh * p->thresh;
  t6 *= t6;
  for (int k = -256; k < 257; k++) {
    long long k6 = (long long)k * k * k;
    k6 *= k6;
    p->lut[k + 258] = (unsigned char)(100 * t6 / (t6 + k6));
  }
}

static int similarity(const params_t *p, int a, int b) { return p->lut[a - b + 258]; }

static void smooth(const params_t *p, const unsigned char *in, unsigned char *out) {
  int n = p->n, r = p->radius;
  memcpy(out, in, (size_t)n * n);
  for (int y = r; y < n - r; y++)
    for (int x = r; x < n - r; x++) {
      int centre = in[y * n + x];
      long total = 0, weight = 0;
      for (int dy = -r; dy <= r; dy++)
        for (int dx = -r; dx <= r; dx++) {
          if (dx == 0 && dy == 0) continue;
          int v = in[(y + dy) * n + x + dx];
          int w = similarity(p, v, centre);
          total += (long)w * v;
          weight += w;
        }
      out[y * n + x] = (unsigned char)(weight ? (total + weight / 2) / weight : centre);
    }
}

/* The 37 pixel circular mask, unrolled as in the original detector. */
#define P(dx, dy)                                          \
  {                                                        \
    int w = lut[q[(dy) * n + (dx)] - c + 258];             \
    area += w;                                             \
    sx += w * (dx);                                        \
    sy += w * (dy);                                        \
  }

static int usan_area(const params_t *p, const unsigned char *in, int x, int y, int *gx, int *gy) {
  const unsigned char *lut = p->lut;
  const unsigned char *q = in + y * p->n + x;
  int n = p->n, c = *q, area = 0, sx = 0, sy = 0;
  P(-1, -3) P(0, -3) P(1, -3)
  P(-2, -2) P(-1, -2) P(0, -2) P(1, -2) P(2, -2)
  P(-3, -1) P(-2, -1) P(-1, -1) P(0, -1) P(1, -1) P(2, -1) P(3, -1)
  P(-3, 0) P(-2, 0) P(-1, 0) P(0, 0) P(1, 0) P(2, 0) P(3, 0)
  P(-3, 1) P(-2, 1) P(-1, 1) P(0, 1) P(1, 1) P(2, 1) P(3, 1)
  P(-2, 2) P(-1, 2) P(0, 2) P(1, 2) P(2, 2)
  P(-1, 3) P(0, 3) P(1, 3)
  *gx = sx;
  *gy = sy;
  return area;
}

#undef P

static int is_local_max(const int *resp, int n, int x, int y) {
  int v = resp[y * n + x];
  if (v <= 0) return 0;
  for (int dy = -1; dy <= 1; dy++)
    for (int dx = -1; dx <= 1; dx++) {
      if (!dx && !dy) continue;
      int o = resp[(y + dy) * n + x + dx];
      if (o > v || (o == v && (dy < 0 || (dy == 0 && dx < 0)))) return 0;
    }
  return 1;
}

static int edges(const params_t *p, const unsigned char *in, int *resp, unsigned char *dir) {
  int n = p->n, r = 4, found = 0;
  int gx, gy;
  int geometric = 3700 * 3 / 4;
  memset(resp, 0, sizeof(int) * (size_t)n * n);
  memset(dir, 0, (size_t)n * n);
  for (int y = r; y < n - r; y++)
    for (int x = r; x < n - r; x++) {
      int area = usan_area(p, in, x, y, &gx, &gy);
      if (area >= geometric) continue;
      resp[y * n + x] = geometric - area;
      int ax = gx < 0 ? -gx : gx, ay = gy < 0 ? -gy : gy;
      if (ay * 2 < ax) dir[y * n + x] = 1;
      else if (ax * 2 < ay) dir[y * n + x] = 2;
      else dir[y * n + x] = (gx > 0) == (gy > 0) ? 3 : 4;
    }
  for (int y = r; y < n - r; y++)
    for (int x = r; x < n - r; x++) {
      int v = resp[y * n + x];
      if (v <= 0) continue;
      int a, b;
      switch (dir[y * n + x]) {
        case 1: a = resp[(y - 1) * n + x]; b = resp[(y + 1) * n + x]; break;
        case 2: a = resp[y * n + x - 1]; b = resp[y * n + x + 1]; break;
        case 3: a = resp[(y - 1) * n + x + 1]; b = resp[(y + 1) * n + x - 1]; break;
        default: a = resp[(y - 1) * n + x - 1]; b = resp[(y + 1) * n + x + 1]; break;
      }
      if (v >= a && v > b) found++;
    }
  return found;
}

static int corners(const params_t *p, const unsigned char *in, int *resp) {
  int n = p->n, r = 4, found = 0, gx, gy;
  int geometric = 3700 / 2;
  memset(resp, 0, sizeof(int) * (size_t)n * n);
  for (int y = r; y < n - r; y++)
    for (int x = r; x < n - r; x++) {
      int area = usan_area(p, in, x, y, &gx, &gy);
      if (area >= geometric) continue;
      /* reject false corners whose centre of gravity sits on the nucleus */
      if (gx * gx + gy * gy < (3700 / 25) * (3700 / 25)) continue;
      resp[y * n + x] = geometric - area;
    }
  for (int y = r + 1; y < n - r - 1; y++)
    for (int x = r + 1; x < n - r - 1; x++) found += is_local_max(resp, n, x, y);
  return found;
}

static unsigned long digest(const unsigned char *img, int n, unsigned long h) {
  for (int i = 0; i < n * n; i++) h = (h * 31u + img[i]) & 0xffffffffUL;
  return h;
}

static int read_dataset(int *n, int *passes) {
  const char *path = getenv("FLAGFORGE_DATASET");
  if (!path || !*path) return 0;
  FILE *f = fopen(path, "r");
  if (!f) return -1;
  int ok = fscanf(f, "%d %d", n, passes) == 2;
  fclose(f);
  return ok ? 1 : -1;
}

int main(int argc, char **argv) {
  params_t p;
  int passes = 3;
  p.n = 256;
  p.radius = 3;
  p.thresh = 20;
  if (argc > 1) p.n = atoi(argv[1]);
  if (argc > 2) passes = atoi(argv[2]);
  if (argc > 3) p.radius = atoi(argv[3]);
  if (argc <= 1 && read_dataset(&p.n, &passes) < 0) {
    fprintf(stderr, "unreadable dataset\n");
    return 3;
  }
  if (p.n < 32 || passes < 1 || p.radius < 1 || p.radius > 3) {
    fprintf(stderr, "usage: susan [size>=32] [passes>=1] [radius 1..3]\n");
    return 2;
  }

  size_t pixels = (size_t)p.n * p.n;
  unsigned char *img = malloc(pixels), *tmp = malloc(pixels), *dir = malloc(pixels);
  int *resp = malloc(sizeof(int) * pixels);
  if (!img || !tmp || !dir || !resp) return 4;
  setup_lut(&p);
  make_image(img, p.n);

  unsigned long h = 0;
  int total_edges = 0, total_corners = 0;
  for (int i = 0; i < passes; i++) {
    smooth(&p, img, tmp);
    total_edges += edges(&p, tmp, resp, dir);
    total_corners += corners(&p, tmp, resp);
    h = digest(tmp, p.n, h);
    unsigned char *s = img;
    img = tmp;
    tmp = s;
  }
  printf("edges %d\ncorners %d\nchecksum %lu\n", total_edges, total_corners, h);
  free(img);
  free(tmp);
  free(dir);
  free(resp);
  return 0;
}
