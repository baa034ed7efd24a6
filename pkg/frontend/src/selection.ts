// Triplet selection state machine. The user picks two leaves to group
// (the pair) and one leaf that does not belong with them (the outgroup),
// switching between the two roles explicitly. Leaves outside the shown
// subset can never enter the selection.

export type Role = "pair" | "outgroup";

export interface TripletChoice {
  a: number;
  b: number;
  c: number;
}

export class TripletSelection {
  private readonly allowed: Set<number>;
  pair: number[] = [];
  outgroup: number | null = null;
  activeRole: Role = "pair";

  constructor(subset: Iterable<number>) {
    this.allowed = new Set(subset);
  }

  /** Toggle a leaf in or out of the selection; returns false if ignored. */
  click(leaf: number): boolean {
    if (!this.allowed.has(leaf)) return false;
    if (this.pair.includes(leaf)) {
      this.pair = this.pair.filter((p) => p !== leaf);
      return true;
    }
    if (this.outgroup === leaf) {
      this.outgroup = null;
      return true;
    }
    if (this.activeRole === "pair") {
      if (this.pair.length >= 2) return false; // unselect or switch role first
      this.pair.push(leaf);
    } else {
      this.outgroup = leaf; // a second pick replaces the first
    }
    return true;
  }

  toggleRole(): Role {
    this.activeRole = this.activeRole === "pair" ? "outgroup" : "pair";
    return this.activeRole;
  }

  roleOf(leaf: number): Role | null {
    if (this.pair.includes(leaf)) return "pair";
    if (this.outgroup === leaf) return "outgroup";
    return null;
  }

  get complete(): boolean {
    return this.pair.length === 2 && this.outgroup !== null;
  }

  get count(): number {
    return this.pair.length + (this.outgroup === null ? 0 : 1);
  }

  triplet(): TripletChoice {
    if (!this.complete) throw new Error("selection is incomplete");
    return { a: this.pair[0]!, b: this.pair[1]!, c: this.outgroup! };
  }

  clear(): void {
    this.pair = [];
    this.outgroup = null;
    this.activeRole = "pair";
  }
}
