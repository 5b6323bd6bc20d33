/* Shared jsdom helpers. jsdom has no layout engine, so geometry must be
 * read from attributes rather than getBBox/getBoundingClientRect.
 */

export function mount(): HTMLElement {
  document.body.innerHTML = '';
  const container = document.createElement('div');
  document.body.appendChild(container);
  return container;
}

/* Drain pending microtask chains (fetch mocks resolve through several
 * awaits, so a single `await Promise.resolve()` is not enough). */
export async function flush(rounds = 8): Promise<void> {
  for (let i = 0; i < rounds; i++) {
    await Promise.resolve();
  }
}

export function q<T extends Element = HTMLElement>(root: ParentNode, selector: string): T {
  const node = root.querySelector<T>(selector);
  if (!node) throw new Error(`no element matches ${selector}`);
  return node;
}

export function qa<T extends Element = HTMLElement>(root: ParentNode, selector: string): T[] {
  return Array.from(root.querySelectorAll<T>(selector));
}

export function click(target: Element): void {
  target.dispatchEvent(new MouseEvent('click', { bubbles: true }));
}

export function setValue(input: HTMLInputElement | HTMLTextAreaElement | HTMLSelectElement, value: string): void {
  input.value = value;
  input.dispatchEvent(new Event('input', { bubbles: true }));
  input.dispatchEvent(new Event('change', { bubbles: true }));
}

export function setChecked(input: HTMLInputElement, checked: boolean): void {
  input.checked = checked;
  input.dispatchEvent(new Event('change', { bubbles: true }));
}

export function mouse(target: Element, type: string, x: number, y: number): void {
  target.dispatchEvent(new MouseEvent(type, { bubbles: true, clientX: x, clientY: y }));
}

export function hover(target: Element): void {
  target.dispatchEvent(new MouseEvent('mouseenter', { bubbles: false }));
}

export function decodeMarker(src: string): string {
  const base64 = src.replace('data:image/png;base64,', '');
  return atob(base64);
}

/* A promise whose resolution the test controls, for staging slow or
 * out-of-order responses. */
export function deferred<T>(): { promise: Promise<T>; resolve: (value: T) => void; reject: (err: unknown) => void } {
  let resolve!: (value: T) => void;
  let reject!: (err: unknown) => void;
  const promise = new Promise<T>((res, rej) => {
    resolve = res;
    reject = rej;
  });
  return { promise, resolve, reject };
}
