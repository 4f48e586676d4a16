/** Keyboard bindings for the review queue. Pure key-to-action mapping so the
 *  handler in main stays a one-liner and the table is testable. */

export type QueueAction =
  | { kind: "next" }
  | { kind: "prev" }
  | { kind: "accept" }
  | { kind: "label"; index: number };

export function keyToAction(key: string): QueueAction | null {
  if (key === "Enter") return { kind: "accept" };
  if (key === "ArrowRight" || key === "j") return { kind: "next" };
  if (key === "ArrowLeft" || key === "k") return { kind: "prev" };
  if (key.length === 1 && key >= "1" && key <= "6") {
    return { kind: "label", index: Number(key) - 1 };
  }
  return null;
}

/** Keys typed into form controls never drive the queue. */
export function isTypingTarget(target: EventTarget | null): boolean {
  if (!(target instanceof HTMLElement)) return false;
  const tag = target.tagName;
  return tag === "INPUT" || tag === "TEXTAREA" || tag === "SELECT" || target.isContentEditable;
}
