// Session controller: the DOM-free core of the app. Owns the query
// lifecycle (fetch, select, submit or accept, repeat), enforces the
// client-side answer invariants, and exposes phase flags the view binds
// to. One in-flight request at a time.

import { Answer, ApiError, QueryPayload, SessionApi, StatePayload } from "./api.js";
import { TripletChoice, TripletSelection } from "./selection.js";

export type Phase = "idle" | "loading" | "selecting" | "submitting" | "failed";

export class SessionController {
  query: QueryPayload | null = null;
  selection: TripletSelection | null = null;
  phase: Phase = "idle";
  lastError: string | null = null;
  readonly submitted: TripletChoice[] = [];
  answeredQueries = 0;
  lastAckConstraints = 0;

  constructor(
    private readonly api: SessionApi,
    readonly sessionId: string,
  ) {}

  /** Pull the next pending query; the selection starts out empty. */
  async nextQuery(): Promise<QueryPayload> {
    this.phase = "loading";
    try {
      this.query = await this.api.getQuery(this.sessionId);
    } catch (err) {
      this.phase = "failed";
      this.lastError = describe(err);
      throw err;
    }
    this.selection = new TripletSelection(this.query.subset);
    this.phase = "selecting";
    this.lastError = null;
    return this.query;
  }

  get inputEnabled(): boolean {
    return this.phase === "selecting";
  }

  clickLeaf(leaf: number): boolean {
    if (!this.inputEnabled || !this.selection) return false;
    return this.selection.click(leaf);
  }

  toggleRole(): void {
    if (this.inputEnabled && this.selection) this.selection.toggleRole();
  }

  get canSubmit(): boolean {
    return this.inputEnabled && this.selection !== null && this.selection.complete;
  }

  async submitTriplet(): Promise<boolean> {
    if (!this.canSubmit || !this.query || !this.selection) return false;
    const choice = this.selection.triplet();
    const subset = new Set(this.query.subset);
    // mirror of the server-side rule; unreachable through clicks but kept
    // as the last line of defense for programmatic callers
    for (const leaf of [choice.a, choice.b, choice.c]) {
      if (!subset.has(leaf)) {
        this.lastError = `leaf ${leaf} is not in the shown subset`;
        return false;
      }
    }
    const ok = await this.sendAnswer({ kind: "triplet", ...choice });
    if (ok) this.submitted.push(choice);
    return ok;
  }

  async accept(): Promise<boolean> {
    if (!this.inputEnabled) return false;
    return this.sendAnswer({ kind: "accept" });
  }

  /** POST one answer; on server rejection re-enable input with the message. */
  private async sendAnswer(answer: Answer): Promise<boolean> {
    this.phase = "submitting";
    try {
      const ack = await this.api.postAnswer(this.sessionId, answer);
      this.lastAckConstraints = ack.constraints_count;
    } catch (err) {
      if (err instanceof ApiError && err.status < 500) {
        this.lastError = `${err.code}: ${err.message}`;
        this.phase = "selecting";
        return false;
      }
      this.phase = "failed";
      this.lastError = describe(err);
      throw err;
    }
    this.answeredQueries += 1;
    await this.nextQuery();
    return true;
  }

  pollState(): Promise<StatePayload> {
    return this.api.getState(this.sessionId);
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return `${err.code}: ${err.message}`;
  return err instanceof Error ? err.message : String(err);
}
