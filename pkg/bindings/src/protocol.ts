/**
 * Framed stdio protocol shared with the Python worker.
 *
 * Each request is one JSON header line followed by the raw little-endian
 * float64 payloads of the tensors named in `shapes` (channel-major).
 * Responses mirror the layout. Calls are strictly serialized: one request
 * is in flight at a time, later calls queue behind it.
 */

import { spawn, type ChildProcessByStdio } from "node:child_process";
import type { Readable, Writable } from "node:stream";

/** Channel-major tensor shape: [channels, height, width]. */
export type Shape = readonly [number, number, number];

export interface RequestHeader {
  op: string;
  shapes?: Shape[];
  [key: string]: unknown;
}

export interface ResponseHeader {
  ok: boolean;
  shapes?: Shape[];
  loss?: number;
  kind?: string;
  error?: string;
  pong?: boolean;
}

export function elementCount(shape: Shape): number {
  return shape[0] * shape[1] * shape[2];
}

export function validateShape(shape: Shape, length: number, label: string): void {
  if (shape.length !== 3 || shape.some((d) => !Number.isInteger(d) || d < 1)) {
    throw new Error(`${label}: shape must be three positive integers, got ${JSON.stringify(shape)}`);
  }
  if (elementCount(shape) !== length) {
    throw new Error(
      `${label}: buffer holds ${length} samples but shape ${JSON.stringify(shape)} needs ${elementCount(shape)}`,
    );
  }
}

/** View a Float64Array's bytes without copying. */
export function bytesOf(view: Float64Array): Buffer {
  return Buffer.from(view.buffer, view.byteOffset, view.byteLength);
}

interface Pending {
  payloadBytes: number | null;
  header: ResponseHeader | null;
  resolve: (value: { header: ResponseHeader; payload: Buffer }) => void;
  reject: (error: Error) => void;
}

/** One worker process plus request serialization and frame reassembly. */
export class WorkerChannel {
  #child: ChildProcessByStdio<Writable, Readable, null>;
  #buffer: Buffer = Buffer.alloc(0);
  #pending: Pending[] = [];
  #queue: Promise<unknown> = Promise.resolve();
  #dead: Error | null = null;

  constructor(command: string, args: string[]) {
    this.#child = spawn(command, args, { stdio: ["pipe", "pipe", "inherit"] });
    this.#child.stdout.on("data", (chunk: Buffer) => this.#onData(chunk));
    this.#child.on("exit", (code) => {
      this.#dead = new Error(`worker exited with code ${code}`);
      for (const p of this.#pending.splice(0)) p.reject(this.#dead);
    });
    this.#child.on("error", (err) => {
      this.#dead = err instanceof Error ? err : new Error(String(err));
      for (const p of this.#pending.splice(0)) p.reject(this.#dead);
    });
  }

  get pid(): number | undefined {
    return this.#child.pid;
  }

  /** Send one framed request; resolves with the header and its payload. */
  request(
    header: RequestHeader,
    payloads: Buffer[],
  ): Promise<{ header: ResponseHeader; payload: Buffer }> {
    const todo = () =>
      new Promise<{ header: ResponseHeader; payload: Buffer }>((resolve, reject) => {
        if (this.#dead) {
          reject(this.#dead);
          return;
        }
        this.#pending.push({ payloadBytes: null, header: null, resolve, reject });
        this.#child.stdin.write(JSON.stringify(header) + "\n");
        for (const payload of payloads) this.#child.stdin.write(payload);
      });
    const result = this.#queue.then(todo, todo);
    this.#queue = result.catch(() => undefined);
    return result;
  }

  #onData(chunk: Buffer): void {
    this.#buffer = this.#buffer.length === 0 ? chunk : Buffer.concat([this.#buffer, chunk]);
    while (this.#pending.length > 0) {
      const current = this.#pending[0];
      if (current.header === null) {
        const newline = this.#buffer.indexOf(0x0a);
        if (newline < 0) return;
        const line = this.#buffer.subarray(0, newline).toString("utf-8");
        this.#buffer = this.#buffer.subarray(newline + 1);
        const parsed = JSON.parse(line) as ResponseHeader;
        current.header = parsed;
        const shapes = parsed.ok && parsed.shapes ? parsed.shapes : [];
        current.payloadBytes = shapes.reduce((sum, s) => sum + 8 * elementCount(s), 0);
      }
      if (this.#buffer.length < (current.payloadBytes ?? 0)) return;
      const bytes = current.payloadBytes ?? 0;
      const payload = Buffer.from(this.#buffer.subarray(0, bytes)); // one output allocation
      this.#buffer = this.#buffer.subarray(bytes);
      this.#pending.shift();
      current.resolve({ header: current.header, payload });
    }
  }

  async close(): Promise<void> {
    if (this.#dead) return;
    try {
      await this.request({ op: "shutdown" }, []);
    } catch {
      // worker already gone
    }
    this.#child.stdin.end();
  }

  kill(): void {
    this.#child.kill();
  }
}
