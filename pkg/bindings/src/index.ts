/**
 * Node bindings for the sasr edge-weighted loss library.
 *
 * Exposes edge-map extraction, weight-matrix combination, and the
 * spatially adaptive pixel loss with its gradient, for dropping the SA
 * loss into an existing training pipeline. Tensors are caller-owned
 * contiguous Float64Arrays with an explicit [channels, height, width]
 * shape; they cross to the worker without re-encoding, so results are
 * bit-identical to native library calls.
 */

import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";
import { z } from "zod";

import {
  WorkerChannel,
  bytesOf,
  elementCount,
  validateShape,
  type ResponseHeader,
  type Shape,
} from "./protocol.js";

export type { Shape } from "./protocol.js";

/** A caller-owned tensor view; the buffer is read-only during a call. */
export interface ArrayView {
  shape: Shape;
  data: Float64Array;
}

export const EdgeConfigSchema = z
  .object({
    method: z.enum(["local_variance", "canny", "lv"]).optional(),
    window_radius: z.number().int().min(1).optional(),
    delta: z.number().positive().optional(),
    sigma: z.number().positive().optional(),
    low: z.number().gt(0).lt(1).optional(),
    high: z.number().gt(0).lt(1).optional(),
  })
  .strict();

export const CoeffsConfigSchema = z
  .object({
    alpha: z.number().optional(),
    alpha1: z.number().optional(),
    alpha2: z.number().optional(),
    beta1: z.number().optional(),
    beta2: z.number().optional(),
    epsilon: z.number().positive().optional(),
    norm: z.enum(["l1", "charbonnier"]).optional(),
  })
  .strict();

export const SaLossConfigSchema = z
  .object({
    edge: EdgeConfigSchema.optional(),
    coeffs: CoeffsConfigSchema.optional(),
  })
  .strict();

export type EdgeConfig = z.infer<typeof EdgeConfigSchema>;
export type SaLossConfig = z.infer<typeof SaLossConfigSchema>;

/** Raised when the native side rejects a request. */
export class NativeError extends Error {
  readonly kind: string;

  constructor(kind: string, message: string) {
    super(message);
    this.name = "NativeError";
    this.kind = kind;
  }
}

function unwrap(header: ResponseHeader): void {
  if (!header.ok) {
    throw new NativeError(header.kind ?? "internal", header.error ?? "unknown native error");
  }
}

function viewOf(header: ResponseHeader, payload: Buffer): ArrayView {
  const shape = (header.shapes ?? [])[0];
  if (!shape) throw new NativeError("internal", "response carried no tensor");
  const data = new Float64Array(payload.buffer, payload.byteOffset, elementCount(shape));
  return { shape, data };
}

export interface BindingsOptions {
  /** Python interpreter with the sasr package installed. */
  python?: string;
  /** Override the worker script path. */
  workerPath?: string;
}

/**
 * A live bridge to the native library. Construction spawns one worker
 * process; calls are serialized over it and may be issued concurrently
 * from async code. Call close() when done.
 */
export class SasrBindings {
  #channel: WorkerChannel;

  constructor(options: BindingsOptions = {}) {
    // compiled layout is bindings/dist/index.js; the worker sits at bindings/worker.py
    const here = dirname(fileURLToPath(import.meta.url));
    const worker = options.workerPath ?? join(here, "..", "worker.py");
    this.#channel = new WorkerChannel(options.python ?? "python3", ["-u", worker]);
  }

  get workerPid(): number | undefined {
    return this.#channel.pid;
  }

  /** Round-trip liveness probe. */
  async ping(): Promise<boolean> {
    const { header } = await this.#channel.request({ op: "ping" }, []);
    unwrap(header);
    return header.pong === true;
  }

  /** Edge map W(x) of an image, by local variance or Canny. */
  async extractEdgeMap(image: ArrayView, config: EdgeConfig = {}): Promise<ArrayView> {
    validateShape(image.shape, image.data.length, "image");
    const cfg = { edge: EdgeConfigSchema.parse(config) };
    const { header, payload } = await this.#channel.request(
      { op: "edge_map", shapes: [image.shape], cfg },
      [bytesOf(image.data)],
    );
    unwrap(header);
    return viewOf(header, payload);
  }

  /** Combined per-element weights h = alpha + beta * w. */
  async buildWeightMatrix(weights: ArrayView, alpha: number, beta: number): Promise<ArrayView> {
    validateShape(weights.shape, weights.data.length, "weights");
    const { header, payload } = await this.#channel.request(
      { op: "build_weight_matrix", shapes: [weights.shape], alpha, beta },
      [bytesOf(weights.data)],
    );
    unwrap(header);
    return viewOf(header, payload);
  }

  /**
   * Spatially adaptive pixel loss and its gradient with respect to sr.
   *
   * The edge map is extracted from hr per the config's edge section; the
   * coeffs section supplies beta1/beta2/epsilon/norm. The returned
   * gradient is ready to feed a host-framework optimizer.
   */
  async saPixelLossAndGrad(
    hr: ArrayView,
    sr: ArrayView,
    config: SaLossConfig = {},
  ): Promise<{ loss: number; grad: ArrayView }> {
    validateShape(hr.shape, hr.data.length, "hr");
    validateShape(sr.shape, sr.data.length, "sr");
    const cfg = SaLossConfigSchema.parse(config);
    const { header, payload } = await this.#channel.request(
      { op: "sa_loss_grad", shapes: [hr.shape, sr.shape], cfg },
      [bytesOf(hr.data), bytesOf(sr.data)],
    );
    unwrap(header);
    if (typeof header.loss !== "number") {
      throw new NativeError("internal", "response carried no loss value");
    }
    return { loss: header.loss, grad: viewOf(header, payload) };
  }

  /** Shut the worker down; the instance is unusable afterwards. */
  async close(): Promise<void> {
    await this.#channel.close();
  }
}
