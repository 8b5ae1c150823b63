"""Compiled transport kernels.

Scene layout (built by ``render.compile_scene``):

* ``tris`` (T, 12): v0, edge1, edge2, unit geometric normal
* ``tri_colors`` (T, 9): per-corner linear RGB (receivers)
* ``tri_info`` (T, 2) int32: role, material index
* ``mats`` (M, 5): base rgb, roughness, metallic
* ``bounds`` / ``nodes``: BVH arrays, see ``bvh.py``
* env arrays: radiance (H, W, 3), row cdf (H+1), column cdfs (H, W+1),
  row probabilities (H), column probabilities (H, W), per-row pixel solid angle (H)

Receivers are single sided: a hit on the back of a receiver triangle lets every
ray through. On the front, the ray type decides (see ``receiver_interaction``).
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .rng import CAMERA_BOUNCE, hash_u01

CAMERA, SHADOW, DIFFUSE, GLOSSY, TRANSMISSION = 0, 1, 2, 3, 4
PASS, OCCLUDE, SHADE = 0, 1, 2
ROLE_RECEIVER, ROLE_OBJECT = 0, 1
STRATEGY_MIS, STRATEGY_BSDF = 0, 1

# per-bounce random dimensions
DIM_LIGHT = 0  # 0..3
DIM_LOBE = 4
DIM_BSDF = 5  # 5..6

# output channels of the tile kernel
OUT_RGB = 0
OUT_OBJ = 3
OUT_ALPHA = 6
OUT_CHANNELS = 7

INV_PI = 1.0 / math.pi
STACK_SIZE = 64

jit = njit(cache=True, nogil=True, error_model="numpy")


@jit
def ray_indicator(ray_type):
    if ray_type == SHADOW or ray_type == DIFFUSE:
        return 1
    return 0


@jit
def receiver_interaction(ray_type, front_facing, camera_sees_receivers):
    """What a receiver surface does to a ray: PASS, OCCLUDE or SHADE."""
    if not front_facing:
        return PASS
    if ray_type == CAMERA and camera_sees_receivers:
        return SHADE
    if ray_indicator(ray_type) == 1:
        if ray_type == SHADOW:
            return OCCLUDE
        return SHADE
    return PASS


# --- geometry ------------------------------------------------------------------------------------

@jit
def _intersect_tri(tris, k, ox, oy, oz, dx, dy, dz, tmin, tmax):
    e1x, e1y, e1z = tris[k, 3], tris[k, 4], tris[k, 5]
    e2x, e2y, e2z = tris[k, 6], tris[k, 7], tris[k, 8]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if abs(det) < 1e-14:
        return -1.0, 0.0, 0.0
    inv = 1.0 / det
    sx = ox - tris[k, 0]
    sy = oy - tris[k, 1]
    sz = oz - tris[k, 2]
    u = (sx * px + sy * py + sz * pz) * inv
    if u < 0.0 or u > 1.0:
        return -1.0, 0.0, 0.0
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return -1.0, 0.0, 0.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t <= tmin or t >= tmax:
        return -1.0, 0.0, 0.0
    return t, u, v


@jit
def _hit_box(bounds, n, ox, oy, oz, ix, iy, iz, tmax):
    t0 = (bounds[n, 0] - ox) * ix
    t1 = (bounds[n, 3] - ox) * ix
    lo = min(t0, t1)
    hi = max(t0, t1)
    t0 = (bounds[n, 1] - oy) * iy
    t1 = (bounds[n, 4] - oy) * iy
    lo = max(lo, min(t0, t1))
    hi = min(hi, max(t0, t1))
    t0 = (bounds[n, 2] - oz) * iz
    t1 = (bounds[n, 5] - oz) * iz
    lo = max(lo, min(t0, t1))
    hi = min(hi, max(t0, t1))
    return hi >= max(lo, 0.0) and lo <= tmax


@jit
def _accepts(tris, tri_info, k, dx, dy, dz, ray_type, camera_sees_receivers, include_objects):
    if tri_info[k, 0] == ROLE_OBJECT:
        return include_objects
    front = tris[k, 9] * dx + tris[k, 10] * dy + tris[k, 11] * dz < 0.0
    return receiver_interaction(ray_type, front, camera_sees_receivers) != PASS


@jit
def trace_ray(tris, tri_info, bounds, nodes, stack, ox, oy, oz, dx, dy, dz, tmin, tmax,
              ray_type, camera_sees_receivers, include_objects, any_hit):
    """Nearest accepted hit as (t, tri, u, v); tri = -1 on a miss.

    With ``any_hit`` the first accepted hit is returned (occlusion queries).
    """
    best_t = tmax
    best_k = -1
    best_u = 0.0
    best_v = 0.0
    if nodes.shape[0] == 0:
        return best_t, best_k, best_u, best_v
    ix = 1.0 / dx
    iy = 1.0 / dy
    iz = 1.0 / dz
    sp = 0
    stack[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        n = stack[sp]
        if not _hit_box(bounds, n, ox, oy, oz, ix, iy, iz, best_t):
            continue
        count = nodes[n, 3]
        if count > 0:
            start = nodes[n, 2]
            for j in range(start, start + count):
                t, u, v = _intersect_tri(tris, j, ox, oy, oz, dx, dy, dz, tmin, best_t)
                if t > 0.0 and _accepts(tris, tri_info, j, dx, dy, dz, ray_type,
                                        camera_sees_receivers, include_objects):
                    best_t = t
                    best_k = j
                    best_u = u
                    best_v = v
                    if any_hit:
                        return best_t, best_k, best_u, best_v
        else:
            stack[sp] = nodes[n, 0]
            stack[sp + 1] = nodes[n, 1]
            sp += 2
    return best_t, best_k, best_u, best_v


# --- environment ---------------------------------------------------------------------------------

@jit
def dir_to_uv(dx, dy, dz):
    u = math.atan2(dx, -dz) / (2.0 * math.pi) + 0.5
    u = u - math.floor(u)
    if u >= 1.0:
        u = 0.0
    v = math.acos(min(1.0, max(-1.0, dy))) / math.pi
    return u, v


@jit
def uv_to_dir(u, v):
    theta = 2.0 * math.pi * (u - 0.5)
    phi = math.pi * v
    sp = math.sin(phi)
    return sp * math.sin(theta), math.cos(phi), -sp * math.cos(theta)


@jit
def env_lookup(env, dx, dy, dz):
    h = env.shape[0]
    w = env.shape[1]
    u, v = dir_to_uv(dx, dy, dz)
    x = u * w - 0.5
    y = v * h - 0.5
    x0 = math.floor(x)
    y0 = math.floor(y)
    fx = x - x0
    fy = y - y0
    i0 = int(x0) % w
    i1 = (i0 + 1) % w
    j0 = min(max(int(y0), 0), h - 1)
    j1 = min(max(int(y0) + 1, 0), h - 1)
    w00 = (1.0 - fx) * (1.0 - fy)
    w01 = fx * (1.0 - fy)
    w10 = (1.0 - fx) * fy
    w11 = fx * fy
    r = w00 * env[j0, i0, 0] + w01 * env[j0, i1, 0] + w10 * env[j1, i0, 0] + w11 * env[j1, i1, 0]
    g = w00 * env[j0, i0, 1] + w01 * env[j0, i1, 1] + w10 * env[j1, i0, 1] + w11 * env[j1, i1, 1]
    b = w00 * env[j0, i0, 2] + w01 * env[j0, i1, 2] + w10 * env[j1, i0, 2] + w11 * env[j1, i1, 2]
    return r, g, b


@jit
def env_pdf(row_p, col_p, pix_solid, uniform, dx, dy, dz):
    if uniform:
        return 0.25 * INV_PI
    h = col_p.shape[0]
    w = col_p.shape[1]
    u, v = dir_to_uv(dx, dy, dz)
    i = min(int(u * w), w - 1)
    j = min(int(v * h), h - 1)
    return row_p[j] * col_p[j, i] / pix_solid[j]


@jit
def env_sample(row_cdf, col_cdf, row_p, col_p, pix_solid, uniform, u1, u2, u3, u4):
    """Sample a direction; returns (dx, dy, dz, pdf)."""
    if uniform:
        z = 1.0 - 2.0 * u1
        r = math.sqrt(max(0.0, 1.0 - z * z))
        phi = 2.0 * math.pi * u2
        return r * math.cos(phi), z, r * math.sin(phi), 0.25 * INV_PI
    h = col_p.shape[0]
    w = col_p.shape[1]
    j = np.searchsorted(row_cdf, u1, side="right") - 1
    j = min(max(j, 0), h - 1)
    i = np.searchsorted(col_cdf[j], u2, side="right") - 1
    i = min(max(i, 0), w - 1)
    c0 = math.cos(math.pi * j / h)
    c1 = math.cos(math.pi * (j + 1) / h)
    cphi = c0 - u3 * (c0 - c1)
    v = math.acos(min(1.0, max(-1.0, cphi))) / math.pi
    u = (i + u4) / w
    dx, dy, dz = uv_to_dir(u, v)
    return dx, dy, dz, row_p[j] * col_p[j, i] / pix_solid[j]


# --- BSDF ----------------------------------------------------------------------------------------

@jit
def _basis(nx, ny, nz):
    sign = 1.0 if nz >= 0.0 else -1.0
    a = -1.0 / (sign + nz)
    b = nx * ny * a
    return (1.0 + sign * nx * nx * a, sign * b, -sign * nx,
            b, sign + ny * ny * a, -ny)


@jit
def _ggx_d(alpha, cos_h):
    a2 = alpha * alpha
    d = cos_h * cos_h * (a2 - 1.0) + 1.0
    return a2 / (math.pi * d * d)


@jit
def _smith_g1(alpha, cos_v):
    a2 = alpha * alpha
    return 2.0 * cos_v / (cos_v + math.sqrt(a2 + (1.0 - a2) * cos_v * cos_v))


@jit
def bsdf_eval(nx, ny, nz, wox, woy, woz, wix, wiy, wiz, kd, f0, alpha, p_spec):
    """Lambert + GGX-metal lobes; returns (fr, fg, fb, pdf) with pdf in solid angle."""
    cos_i = nx * wix + ny * wiy + nz * wiz
    cos_o = nx * wox + ny * woy + nz * woz
    if cos_i <= 0.0 or cos_o <= 0.0:
        return 0.0, 0.0, 0.0, 0.0
    fr = kd[0] * INV_PI
    fg = kd[1] * INV_PI
    fb = kd[2] * INV_PI
    pdf = (1.0 - p_spec) * cos_i * INV_PI
    if p_spec > 0.0:
        hx = wix + wox
        hy = wiy + woy
        hz = wiz + woz
        hl = math.sqrt(hx * hx + hy * hy + hz * hz)
        hx /= hl
        hy /= hl
        hz /= hl
        cos_h = max(nx * hx + ny * hy + nz * hz, 0.0)
        oh = max(wox * hx + woy * hy + woz * hz, 1e-12)
        d = _ggx_d(alpha, cos_h)
        g = _smith_g1(alpha, cos_i) * _smith_g1(alpha, cos_o)
        s = (1.0 - oh) ** 5
        common = p_spec * d * g / (4.0 * cos_i * cos_o)
        fr += common * (f0[0] + (1.0 - f0[0]) * s)
        fg += common * (f0[1] + (1.0 - f0[1]) * s)
        fb += common * (f0[2] + (1.0 - f0[2]) * s)
        pdf += p_spec * d * cos_h / (4.0 * oh)
    return fr, fg, fb, pdf


@jit
def bsdf_sample_dir(nx, ny, nz, wox, woy, woz, alpha, p_spec, u_lobe, u1, u2):
    """Sample an incident direction; returns (wix, wiy, wiz, ray_type)."""
    tx, ty, tz, bx, by, bz = _basis(nx, ny, nz)
    if u_lobe < p_spec:
        cos_t = math.sqrt((1.0 - u1) / (1.0 + (alpha * alpha - 1.0) * u1))
        sin_t = math.sqrt(max(0.0, 1.0 - cos_t * cos_t))
        phi = 2.0 * math.pi * u2
        lx = sin_t * math.cos(phi)
        ly = sin_t * math.sin(phi)
        hx = lx * tx + ly * bx + cos_t * nx
        hy = lx * ty + ly * by + cos_t * ny
        hz = lx * tz + ly * bz + cos_t * nz
        oh = wox * hx + woy * hy + woz * hz
        return 2.0 * oh * hx - wox, 2.0 * oh * hy - woy, 2.0 * oh * hz - woz, GLOSSY
    r = math.sqrt(u1)
    phi = 2.0 * math.pi * u2
    lx = r * math.cos(phi)
    ly = r * math.sin(phi)
    lz = math.sqrt(max(0.0, 1.0 - u1))
    return (lx * tx + ly * bx + lz * nx, lx * ty + ly * by + lz * ny,
            lx * tz + ly * bz + lz * nz, DIFFUSE)


@jit
def power_heuristic(a, b):
    a2 = a * a
    b2 = b * b
    if a2 + b2 <= 0.0:
        return 0.0
    return a2 / (a2 + b2)


# --- path tracing --------------------------------------------------------------------------------

@jit
def trace_path(ox, oy, oz, dx, dy, dz, ray_type0, seed, pixel, sample,
               tris, tri_colors, tri_info, mats, bounds, nodes, stack,
               env, row_cdf, col_cdf, row_p, col_p, pix_solid, env_uniform,
               max_depth, strategy, include_objects, camera_sees_receivers, eps):
    """Radiance along one camera ray; returns (r, g, b, primary_hit_is_object)."""
    lr = 0.0
    lg = 0.0
    lb = 0.0
    tr = 1.0
    tg = 1.0
    tb = 1.0
    ray_type = ray_type0
    bsdf_pdf = 0.0
    primary_object = False
    kd = np.empty(3)
    f0 = np.empty(3)
    for bounce in range(max_depth + 1):
        t, k, bu, bv = trace_ray(tris, tri_info, bounds, nodes, stack, ox, oy, oz, dx, dy, dz,
                                 0.0, np.inf, ray_type, camera_sees_receivers, include_objects, False)
        if k < 0:
            er, eg, eb = env_lookup(env, dx, dy, dz)
            w = 1.0
            if bounce > 0 and strategy == STRATEGY_MIS:
                w = power_heuristic(bsdf_pdf, env_pdf(row_p, col_p, pix_solid, env_uniform, dx, dy, dz))
            lr += tr * er * w
            lg += tg * eg * w
            lb += tb * eb * w
            break
        if bounce == max_depth:
            break
        role = tri_info[k, 0]
        if bounce == 0:
            primary_object = role == ROLE_OBJECT
        px = ox + t * dx
        py = oy + t * dy
        pz = oz + t * dz
        nx = tris[k, 9]
        ny = tris[k, 10]
        nz = tris[k, 11]
        if nx * dx + ny * dy + nz * dz > 0.0:
            nx = -nx
            ny = -ny
            nz = -nz
        wox = -dx
        woy = -dy
        woz = -dz
        if role == ROLE_RECEIVER:
            b0 = 1.0 - bu - bv
            for c in range(3):
                kd[c] = b0 * tri_colors[k, c] + bu * tri_colors[k, 3 + c] + bv * tri_colors[k, 6 + c]
                f0[c] = 0.0
            alpha = 1.0
            p_spec = 0.0
        else:
            m = tri_info[k, 1]
            metal = mats[m, 4]
            for c in range(3):
                kd[c] = (1.0 - metal) * mats[m, c]
                f0[c] = mats[m, c]
            alpha = max(mats[m, 3] * mats[m, 3], 1e-3)
            p_spec = metal
        # spawn point just off the surface on the reflecting side
        sx = px + nx * eps
        sy = py + ny * eps
        sz = pz + nz * eps

        if strategy == STRATEGY_MIS:
            u1 = hash_u01(seed, pixel, sample, bounce, DIM_LIGHT)
            u2 = hash_u01(seed, pixel, sample, bounce, DIM_LIGHT + 1)
            u3 = hash_u01(seed, pixel, sample, bounce, DIM_LIGHT + 2)
            u4 = hash_u01(seed, pixel, sample, bounce, DIM_LIGHT + 3)
            lx, ly, lz, lpdf = env_sample(row_cdf, col_cdf, row_p, col_p, pix_solid, env_uniform,
                                          u1, u2, u3, u4)
            if lpdf > 0.0:
                fr, fg, fb, bpdf = bsdf_eval(nx, ny, nz, wox, woy, woz, lx, ly, lz, kd, f0, alpha, p_spec)
                if fr + fg + fb > 0.0:
                    _, occ, _, _ = trace_ray(tris, tri_info, bounds, nodes, stack, sx, sy, sz, lx, ly, lz,
                                             0.0, np.inf, SHADOW, camera_sees_receivers, include_objects, True)
                    if occ < 0:
                        er, eg, eb = env_lookup(env, lx, ly, lz)
                        cos_l = nx * lx + ny * ly + nz * lz
                        w = power_heuristic(lpdf, bpdf) * cos_l / lpdf
                        lr += tr * fr * er * w
                        lg += tg * fg * eg * w
                        lb += tb * fb * eb * w

        ul = hash_u01(seed, pixel, sample, bounce, DIM_LOBE)
        ua = hash_u01(seed, pixel, sample, bounce, DIM_BSDF)
        ub = hash_u01(seed, pixel, sample, bounce, DIM_BSDF + 1)
        wix, wiy, wiz, next_type = bsdf_sample_dir(nx, ny, nz, wox, woy, woz, alpha, p_spec, ul, ua, ub)
        norm = math.sqrt(wix * wix + wiy * wiy + wiz * wiz)
        if norm <= 0.0:
            break
        wix /= norm
        wiy /= norm
        wiz /= norm
        fr, fg, fb, bpdf = bsdf_eval(nx, ny, nz, wox, woy, woz, wix, wiy, wiz, kd, f0, alpha, p_spec)
        if bpdf <= 0.0:
            break
        cos_i = nx * wix + ny * wiy + nz * wiz
        tr *= fr * cos_i / bpdf
        tg *= fg * cos_i / bpdf
        tb *= fb * cos_i / bpdf
        if tr + tg + tb <= 0.0:
            break
        bsdf_pdf = bpdf
        ray_type = next_type
        ox, oy, oz = sx, sy, sz
        dx, dy, dz = wix, wiy, wiz
    return lr, lg, lb, primary_object


@jit
def render_rows(y0, y1, out, diag, cam, width, height, spp, max_depth, seed, strategy,
                include_objects, camera_sees_receivers, eps,
                tris, tri_colors, tri_info, mats, bounds, nodes,
                env, row_cdf, col_cdf, row_p, col_p, pix_solid, env_uniform):
    """Fill ``out[y0:y1]`` (H, W, 7): radiance rgb, premultiplied object rgb, object alpha."""
    stack = np.empty(STACK_SIZE, dtype=np.int32)
    aspect = width / height
    for y in range(y0, y1):
        for x in range(width):
            pixel = y * width + x
            acc = np.zeros(OUT_CHANNELS)
            for s in range(spp):
                jx = hash_u01(seed, pixel, s, CAMERA_BOUNCE, 0)
                jy = hash_u01(seed, pixel, s, CAMERA_BOUNCE, 1)
                sx = (2.0 * (x + jx) / width - 1.0) * cam[12] * aspect
                sy = (1.0 - 2.0 * (y + jy) / height) * cam[12]
                dx = cam[3] + sx * cam[6] + sy * cam[9]
                dy = cam[4] + sx * cam[7] + sy * cam[10]
                dz = cam[5] + sx * cam[8] + sy * cam[11]
                n = math.sqrt(dx * dx + dy * dy + dz * dz)
                r, g, b, hit_obj = trace_path(cam[0], cam[1], cam[2], dx / n, dy / n, dz / n, CAMERA, seed, pixel, s,
                                              tris, tri_colors, tri_info, mats, bounds, nodes, stack,
                                              env, row_cdf, col_cdf, row_p, col_p, pix_solid, env_uniform,
                                              max_depth, strategy, include_objects, camera_sees_receivers, eps)
                if not (math.isfinite(r) and math.isfinite(g) and math.isfinite(b)):
                    diag[0] += 1
                    r = 0.0
                    g = 0.0
                    b = 0.0
                acc[0] += r
                acc[1] += g
                acc[2] += b
                if hit_obj:
                    acc[3] += r
                    acc[4] += g
                    acc[5] += b
                    acc[6] += 1.0
            for c in range(OUT_CHANNELS):
                out[y, x, c] = acc[c] / spp
