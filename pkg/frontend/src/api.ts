// Typed client for the session server. All payloads are validated with zod
// before they reach the rest of the app, so rendering code can trust its
// inputs and malformed responses surface as ApiError instead of undefined
// property crashes somewhere downstream.

import { z } from "zod";

export const QueryPayload = z.object({
  query_index: z.number().int().nonnegative(),
  scheme_turn: z.string(),
  subset: z.array(z.number().int().nonnegative()),
  newick: z.string().min(1),
  names: z.record(z.string()),
});
export type QueryPayload = z.infer<typeof QueryPayload>;

export const StatePayload = z.object({
  status: z.string(),
  iteration: z.number().int().nonnegative(),
  query_index: z.number().int().nonnegative(),
  constraints_count: z.number().int().nonnegative(),
  log_posterior: z.array(z.number()),
  triplet_distance: z.array(z.number()).nullable(),
  newick: z.string().min(1),
  failure: z.string().nullable(),
});
export type StatePayload = z.infer<typeof StatePayload>;

const CreatedPayload = z.object({
  id: z.string().min(1),
  config: z.record(z.unknown()),
});

const AnswerAck = z.object({
  ok: z.literal(true),
  kind: z.string(),
  constraints_count: z.number().int().nonnegative(),
});
export type AnswerAck = z.infer<typeof AnswerAck>;

const ErrorBody = z.object({ code: z.string(), message: z.string() });

export interface SessionConfig {
  dataset?: string;
  scheme?: "simple" | "smart" | "random" | "active" | "interleaved";
  iterations_per_query?: number;
  subset_size?: number;
  candidates?: number;
  seed?: number;
  sigma2?: number | "auto";
  c?: number;
  trace_capacity?: number;
  trace_stride?: number;
  use_target?: boolean;
}

export type Answer =
  | { kind: "accept" }
  | { kind: "triplet"; a: number; b: number; c: number };

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class SessionApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(
    schema: z.ZodType<T>,
    path: string,
    init?: RequestInit,
  ): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, init);
    const text = await response.text();
    let body: unknown;
    try {
      body = JSON.parse(text);
    } catch {
      throw new ApiError(response.status, "bad_payload", `not JSON: ${text.slice(0, 120)}`);
    }
    if (!response.ok) {
      const parsed = ErrorBody.safeParse(body);
      if (parsed.success) {
        throw new ApiError(response.status, parsed.data.code, parsed.data.message);
      }
      throw new ApiError(response.status, "http_error", text.slice(0, 200));
    }
    const parsed = schema.safeParse(body);
    if (!parsed.success) {
      throw new ApiError(response.status, "bad_payload", parsed.error.message);
    }
    return parsed.data;
  }

  health(): Promise<{ status: string }> {
    return this.request(z.object({ status: z.string() }), "/healthz");
  }

  async createSession(config: SessionConfig = {}): Promise<string> {
    const created = await this.request(CreatedPayload, "/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(config),
    });
    return created.id;
  }

  getQuery(sessionId: string): Promise<QueryPayload> {
    return this.request(QueryPayload, `/sessions/${sessionId}/query`);
  }

  postAnswer(sessionId: string, answer: Answer): Promise<AnswerAck> {
    const body =
      answer.kind === "accept"
        ? { accept: true }
        : { triplet: [answer.a, answer.b, answer.c] };
    return this.request(AnswerAck, `/sessions/${sessionId}/answer`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  getState(sessionId: string): Promise<StatePayload> {
    return this.request(StatePayload, `/sessions/${sessionId}/state`);
  }
}
